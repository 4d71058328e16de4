"""Comparison methods: deterministic fast KM, optimistic gradient and a plain
(non-accelerated) variance-reduced forward iteration."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimators import FullBatch
from .operators import OracleCounter, eval_full
from .solver import DivergenceError, SolverTrace, Sublinear, run, _rng


@dataclass
class BaselineConfig:
    method: str  # "detfkm" | "og" | "vrforward"
    eta: Optional[float] = None
    r: float = 20.0
    beta: Optional[float] = None

    def __post_init__(self):
        if self.method not in ("detfkm", "og", "vrforward"):
            raise ValueError(f"unknown baseline {self.method!r}")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("step size must be positive")


def run_det_fkm(problem, r, beta, max_iters=None, max_epochs=None, target=None,
                x0=None, x_star=None, diagnostics=False):
    """Deterministic fast KM: the VFKM loop with the exact S^k."""
    return run(problem, FullBatch(), Sublinear(r, beta), max_iters=max_iters,
               max_epochs=max_epochs, target=target, x0=x0, x_star=x_star,
               diagnostics=diagnostics, method="detfkm")


def _budget_hit(k, count, n, res, res0, max_iters, max_epochs, target):
    return ((max_iters is not None and k >= max_iters)
            or (max_epochs is not None and count >= max_epochs * n)
            or (target is not None and res <= target * res0))


def run_og(problem, eta, max_iters=None, max_epochs=None, target=None, x0=None,
           x_star=None):
    """x^{k+1} = x^k - eta (2 G x^k - G x^{k-1}) with x^{-1} = x^0."""
    if not eta > 0:
        raise ValueError("step size must be positive")
    if max_iters is None and max_epochs is None and target is None:
        raise ValueError("need a budget")
    n = problem.n
    x = np.ones(problem.p) if x0 is None else np.array(x0, dtype=np.float64)
    x0n = float(np.linalg.norm(x))
    counter = OracleCounter()
    trace = SolverTrace(method="og", n=n)
    t0 = time.perf_counter()
    Gprev = None
    k = 0
    res0 = None
    while True:
        res = float(np.linalg.norm(eval_full(problem, x)))
        res0 = res if res0 is None else res0
        trace.k.append(k)
        trace.residual.append(res)
        trace.oracle.append(counter.count)
        if x_star is not None:
            trace.dist2.append(float((x - x_star) @ (x - x_star)))
        if _budget_hit(k, counter.count, n, res, res0, max_iters, max_epochs, target):
            break
        Gx = eval_full(problem, x, counter)
        if Gprev is None:
            Gprev = Gx
        x_new = x - eta * (2 * Gx - Gprev)
        trace.step_norm.append(float(np.linalg.norm(x_new - x)))
        if not np.all(np.isfinite(x_new)) or np.linalg.norm(x_new) > 1e8 * (1 + x0n):
            raise DivergenceError(f"optimistic gradient diverged at k={k}", trace)
        x, Gprev = x_new, Gx
        k += 1
    trace.x_final = x
    trace.wall_time = time.perf_counter() - t0
    return trace


def run_plain_vr_forward(problem, estimator, eta, max_iters=None, max_epochs=None,
                         target=None, rng=None, x0=None, x_star=None, seed=None):
    """x^{k+1} = x^k - eta S~^k with S~^k an unbiased estimate of G x^k."""
    if not eta > 0:
        raise ValueError("step size must be positive")
    if max_iters is None and max_epochs is None and target is None:
        raise ValueError("need a budget")
    if isinstance(estimator, str):
        raise TypeError("pass an estimator instance (see estimators.make_estimator)")
    rng = _rng(rng if rng is not None else seed)
    n = problem.n
    x = np.ones(problem.p) if x0 is None else np.array(x0, dtype=np.float64)
    x0n = float(np.linalg.norm(x))
    counter = OracleCounter()
    trace = SolverTrace(method=f"vrforward-{estimator.kind}", n=n, seed=seed)
    t0 = time.perf_counter()
    estimator.init(problem, x, counter)
    k = 0
    res0 = None
    while True:
        res = float(np.linalg.norm(eval_full(problem, x)))
        res0 = res if res0 is None else res0
        trace.k.append(k)
        trace.residual.append(res)
        trace.oracle.append(counter.count)
        if x_star is not None:
            trace.dist2.append(float((x - x_star) @ (x - x_star)))
        if _budget_hit(k, counter.count, n, res, res0, max_iters, max_epochs, target):
            break
        before = counter.count
        S = estimator.first(x, 0.0, counter) if k == 0 else estimator.draw(x, x, 0.0, rng, counter)
        sw = bool(getattr(estimator, "last_switch", False)) and k > 0
        trace.switches.append(sw)
        trace.batch_cost.append(counter.count - before - (n if sw else 0))
        x_new = x - eta * S
        trace.step_norm.append(float(np.linalg.norm(x_new - x)))
        if not np.all(np.isfinite(x_new)) or np.linalg.norm(x_new) > 1e8 * (1 + x0n):
            raise DivergenceError(f"forward iteration diverged at k={k}", trace)
        x = x_new
        k += 1
    trace.x_final = x
    trace.wall_time = time.perf_counter() - t0
    return trace
