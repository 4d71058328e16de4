import numpy as np
import pytest

from vfkm.harness import instance_seed
from vfkm.operators import FiniteSumProblem, MinimaxSpec, generate_minimax


@pytest.fixture(scope="session")
def desk0():
    return generate_minimax(MinimaxSpec(13, 7, 500, instance_seed(0, 0)))


@pytest.fixture(scope="session")
def small_minimax():
    return generate_minimax(MinimaxSpec(4, 3, 40, 7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_problem(mats, offsets=None):
    mats = np.asarray(mats, dtype=float)
    if offsets is None:
        offsets = np.zeros(mats.shape[:2])
    return FiniteSumProblem(mats, offsets)
