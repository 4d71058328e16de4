import numpy as np
import pytest

from vfkm.baselines import BaselineConfig, run_det_fkm, run_og, run_plain_vr_forward
from vfkm.estimators import FullBatch, LooplessSvrg, Saga
from vfkm.operators import FiniteSumProblem, MinimaxSpec, eval_full, generate_minimax, reference_solution
from vfkm.solver import DivergenceError, Sublinear, run


def test_detfkm_equals_solver_with_fullbatch(small_minimax):
    P = small_minimax
    a = run_det_fkm(P, 20, 0.5 / P.L, max_iters=400)
    b = run(P, FullBatch(), Sublinear(20, 0.5 / P.L), max_iters=400)
    assert a.residual == b.residual and a.oracle == b.oracle
    assert np.array_equal(a.x_final, b.x_final)
    assert a.method == "detfkm"


def test_detfkm_first_step_scalar():
    P = FiniteSumProblem(np.ones((1, 1, 1)), np.zeros((1, 1)))
    tr = run_det_fkm(P, 3, 1 / 6, max_iters=1, x0=[1.0])
    assert tr.x_final == pytest.approx([0.8])


def test_detfkm_oracle_cost(small_minimax):
    tr = run_det_fkm(small_minimax, 3, 0.1, max_iters=5)
    assert np.all(np.diff(tr.oracle) == small_minimax.n)


def test_og_stationary_at_solution(small_minimax):
    xs = reference_solution(small_minimax)
    tr = run_og(small_minimax, 0.1, max_iters=20, x0=xs)
    assert np.allclose(tr.x_final, xs, atol=1e-13)


def test_og_first_step(small_minimax):
    P = small_minimax
    x0 = np.linspace(0, 1, P.p)
    tr = run_og(P, 0.07, max_iters=1, x0=x0)
    assert np.allclose(tr.x_final, x0 - 0.07 * eval_full(P, x0), atol=1e-14)
    assert tr.oracle == [0, P.n]


def test_og_rotation_ridge_monotone():
    G = np.array([[0.1, 1.0], [-1.0, 0.1]])
    P = FiniteSumProblem(G[None], np.array([[1.0, -1.0]]))
    tr = run_og(P, 1 / (2 * P.L), max_iters=500)
    res = np.array(tr.residual[20:])
    assert np.all(np.diff(res) <= 1e-12)
    assert res[-1] < 0.1 * tr.residual[0]


def test_og_errors(small_minimax):
    with pytest.raises(ValueError):
        run_og(small_minimax, 0.0, max_iters=1)
    with pytest.raises(ValueError):
        run_og(small_minimax, 0.1)
    P = FiniteSumProblem(np.eye(2)[None], np.zeros((1, 2)))
    with pytest.raises(DivergenceError):
        run_og(P, 5.0, max_iters=200)


def test_vr_forward_single_summand_is_forward_iteration():
    P = FiniteSumProblem(np.array([[[1.0, 0.3], [-0.3, 0.5]]]), np.array([[0.1, 0.2]]))
    tr = run_plain_vr_forward(P, Saga(1), 0.3, max_iters=5, seed=0)
    x = np.ones(2)
    for _ in range(5):
        x = x - 0.3 * eval_full(P, x)
    assert np.allclose(tr.x_final, x, atol=1e-14)


def test_vr_forward_unbiased_gamma_zero(small_minimax, rng):
    P = small_minimax
    est = Saga(3).init(P, rng.standard_normal(P.p))
    x = rng.standard_normal(P.p)
    assert np.allclose(est.exact_conditional_mean(x, x, 0.0), eval_full(P, x), atol=1e-12)


def test_vr_forward_geometric_decay():
    P = generate_minimax(MinimaxSpec(3, 2, 30, 4))
    assert P.sigma > 0
    xs = reference_solution(P)
    D = []
    for s in range(20):
        tr = run_plain_vr_forward(P, Saga(3), 1 / (4 * P.L), max_iters=3000, seed=s, x_star=xs)
        D.append(tr.dist2)
    m = np.mean(D, axis=0)
    # log-distance falls roughly linearly: successive thirds shrink by a common factor
    a, b, c = m[1000], m[2000], m[3000]
    assert c < b < a < m[0]
    assert c / b < 0.5 and b / a < 0.5


def test_vr_forward_requires_instance(small_minimax):
    with pytest.raises(TypeError):
        run_plain_vr_forward(small_minimax, "saga", 0.1, max_iters=2)
    tr = run_plain_vr_forward(small_minimax, LooplessSvrg(3, 0.3), 0.01, max_iters=10, seed=0)
    assert tr.method == "vrforward-svrg"


def test_baseline_config():
    assert BaselineConfig("og", eta=0.1).eta == 0.1
    with pytest.raises(ValueError):
        BaselineConfig("aog")
    with pytest.raises(ValueError):
        BaselineConfig("og", eta=-1.0)
