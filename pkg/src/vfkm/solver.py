"""Variance-reduced fast Krasnoselskii-Mann iteration.

    x^{k+1} = x^k + theta_k (x^k - x^{k-1}) - eta_k S~^k

with S~^k an estimator of G x^k - gamma_k G x^{k-1}. Also holds the step-size
formulas, the Lyapunov function used in the analysis and the closed-form rate
bounds.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .estimators import EstimatorConstants, constants as est_constants, u_k as _u_k
from .operators import OracleCounter, eval_full


class DivergenceError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


# ---- schedules -----------------------------------------------------------

@dataclass(frozen=True)
class Sublinear:
    r: float
    beta: float

    def __post_init__(self):
        if not self.r > 2:
            raise ValueError(f"r must exceed 2, got {self.r}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def params(self, k):
        r = self.r
        return k / (k + r + 2), k / (k + r), 2 * self.beta * (k + r) / (k + r + 2)

    def t(self, k):
        return k + self.r + 1


@dataclass(frozen=True)
class Constant:
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def params(self, k):
        return 1.0 / 3.0, 0.5, self.beta


# ---- step sizes and constants ---------------------------------------------

@dataclass
class StepSizePlan:
    beta: float
    beta_bar: float
    regime: str
    provenance: str
    omega: Optional[float] = None


def sublinear_beta_bar(r, L, c: EstimatorConstants):
    return c.rho / ((c.rho + (r + 1) * (c.theta_big + c.theta_hat)) * L)


def linear_beta_bar(L, sigma, c: EstimatorConstants):
    """Largest admissible beta for the constant (linear-rate) schedule."""
    if sigma <= 0:
        raise ValueError("linear regime needs sigma > 0")
    rho = c.rho
    if 2 * rho >= 1:
        raise ValueError(f"linear regime infeasible: 2*rho = {2 * rho} >= 1")
    kappa = L / sigma
    Gam = rho + 2 * (c.theta_big + c.theta_hat)
    M = 2 * (2 * Gam - 1) * kappa
    N = 3 * Gam * kappa + 2 * (1 - 2 * rho)
    disc = N * N + 12 * rho * M
    if disc < 0:
        raise ValueError("linear regime infeasible: N^2 + 12 rho M < 0")
    cands = [3 / 5, 3 * rho / (2 * (1 - 2 * rho)), 1 / (2 * kappa),
             6 * rho / (N + math.sqrt(disc))]
    return min(cands) / sigma


def linear_omega(beta, sigma):
    return 2 * beta * sigma / (3 + 4 * beta * sigma)


def plan_step_size(kind, n, b, p_switch, L, sigma=0.0, regime="sublinear", r=3):
    if L <= 0:
        raise ValueError("L must be positive")
    if regime == "sublinear":
        if kind == "svrg":
            q = b * p_switch ** 2
            beta = q / (2 * L * (q + 64))
            prov = "svrg-half-cap"
        elif kind == "saga":
            beta = b ** 3 / (2 * L * (b ** 3 + 64 * n ** 2))
            prov = "saga-half-cap"
        elif kind == "full":
            beta = 1 / (2 * L)
            prov = "deterministic"
        else:
            raise ValueError(f"unknown estimator kind {kind!r}")
        c = est_constants(kind, n, b, p_switch, simplified=True)
        return StepSizePlan(beta, sublinear_beta_bar(r, L, c), regime, prov)
    if regime == "linear":
        if kind == "full":
            raise ValueError("linear regime is planned for stochastic estimators only")
        c = est_constants(kind, n, b, p_switch, simplified=False)
        bb = linear_beta_bar(L, sigma, c)
        return StepSizePlan(bb, bb, regime, f"{kind}-linear", linear_omega(bb, sigma))
    raise ValueError(f"unknown regime {regime!r}")


@dataclass
class RateConstants:
    beta_bar: float
    Lam: float
    psi: float
    C0: float
    C1: float
    C2: float
    C3: float


def rate_constants(r, beta, L, c: EstimatorConstants):
    bb = sublinear_beta_bar(r, L, c)
    Th = c.theta_big + c.theta_hat
    Lam = 4 * beta * (c.rho - (c.rho + (r + 1) * Th) * L * beta) / (L * c.rho * (r + 1))
    if not Lam > 0:
        raise ValueError(f"beta = {beta} is not below beta_bar = {bb}")
    lb2 = (L * beta) ** 2
    psi = 4 * beta * beta * Th / (c.rho * Lam) if Th > 0 else 0.0
    C0 = r * (1 + 3 * r + 8 * r * lb2)
    C1 = 4 * r * r * (r - 1) * lb2 / (r + 2) + (2 / r + psi) * C0
    C2 = 4 * r * r * lb2 + (psi + 2 * (r + 2) ** 2 / r) * C0 + 4 * (r + 2) ** 2 * C1 / (r * (r - 2))
    C3 = (r + 2) ** 2 * (C1 + C2) / (2 * r * r)
    return RateConstants(bb, Lam, psi, C0, C1, C2, C3)


def rate_bound(k, r, beta, L, R0, c: EstimatorConstants, which="residual"):
    """Upper bound on E||G x^k||^2 (residual) or E||x^{k+1}-x^k||^2 (step).

    R0 is ||x^0 - x*|| (not squared).
    """
    rc = rate_constants(r, beta, L, c)
    k = np.asarray(k, dtype=np.float64)
    if which == "residual":
        return rc.C3 * R0 ** 2 / (beta ** 2 * (k + r - 1) * (k + r + 2))
    if which == "step":
        return rc.C2 * R0 ** 2 / (k + r + 2) ** 2
    raise ValueError(f"unknown bound {which!r}")


def linear_bound(k, L, sigma, beta, R0):
    om = linear_omega(beta, sigma)
    k = np.asarray(k, dtype=np.float64)
    return 4 * (1 + 2 * (L * beta) ** 2) * (1 - om) ** k * R0 ** 2


def lyapunov(problem, x_k, x_kp1, x_star, k, r, beta, c: EstimatorConstants, delta_k, u_k):
    tk = k + r + 1
    tk1 = tk + 1
    Gx = eval_full(problem, x_k)
    e = x_k - x_star
    d = x_kp1 - x_k
    v = r * e + tk1 * d
    val = 4 * r * beta * (tk - 1) * (Gx @ e - beta * (Gx @ Gx))
    val += v @ v + r * (e @ e)
    if c.rho > 0:
        val += 4 * beta * beta * c.theta_hat * (tk - 1) ** 2 / c.rho * u_k
        val += 4 * beta * beta * (1 - c.rho) * (tk - 1) ** 2 / c.rho * delta_k
    return float(val)


# ---- traces --------------------------------------------------------------

@dataclass
class SolverTrace:
    method: str
    n: int
    k: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    oracle: list = field(default_factory=list)
    lyapunov: list = field(default_factory=list)
    delta_k: list = field(default_factory=list)
    u_k: list = field(default_factory=list)
    dist2: list = field(default_factory=list)
    switches: list = field(default_factory=list)
    batch_cost: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    x_final: Optional[np.ndarray] = None
    seed: Optional[int] = None
    wall_time: float = 0.0

    @property
    def epoch(self):
        return [o / self.n for o in self.oracle]

    @property
    def final_residual(self):
        return self.residual[-1]

    def relative(self, key="residual"):
        r = np.asarray(self.residual if key == "residual" else self.extra[key])
        return r / r[0] if r[0] > 0 else r

    def columns(self):
        cols = ["method", "k", "epoch", "residual", "step_norm", "lyapunov", "delta_k"]
        return cols + sorted(self.extra)

    def rows(self):
        m = len(self.k)
        ep = self.epoch
        for j in range(m):
            row = [self.method, self.k[j], repr(ep[j]), repr(self.residual[j]),
                   _cell(self.step_norm, j), _cell(self.lyapunov, j), _cell(self.delta_k, j)]
            row += [_cell(self.extra[c], j) for c in sorted(self.extra)]
            yield row

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            w.writerows(self.rows())


def _cell(seq, j):
    return repr(float(seq[j])) if j < len(seq) and seq[j] is not None else ""


def read_trace_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    if not rows:
        return out
    for key in rows[0]:
        if key == "method":
            out[key] = [r[key] for r in rows]
        else:
            out[key] = np.array([float(r[key]) if r[key] != "" else np.nan for r in rows])
    return out


# ---- iteration -----------------------------------------------------------

def step(x_k, x_km1, estimator, schedule, k, rng, counter=None):
    """One VFKM update; returns (x_{k+1}, S~^k, (theta, gamma, eta))."""
    theta, gamma, eta = schedule.params(k)
    if k == 0:
        S = estimator.first(x_k, gamma, counter)
    else:
        S = estimator.draw(x_k, x_km1, gamma, rng, counter)
    return x_k + theta * (x_k - x_km1) - eta * S, S, (theta, gamma, eta)


def _rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _guard(x, x0norm, trace, k):
    if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 1e8 * (1 + x0norm):
        raise DivergenceError(
            f"iterate diverged at k={k} (|x| = {np.linalg.norm(x):.3e})", trace)


def iterate(problem, estimator, schedule, x0=None, rng=None, max_iters=None,
            max_epochs=None, target=None, x_star=None, diagnostics=False,
            resolvent=None, lam=None, method="vfkm", seed=None):
    """Core loop shared by the equation and inclusion solvers.

    With a resolvent J the estimator is fed u^k = J(x^k) and the estimate is
    shifted by the deterministic term (x^k - u^k)/lam - gamma (x^{k-1}-u^{k-1})/lam.
    """
    if max_iters is None and max_epochs is None and target is None:
        raise ValueError("need at least one budget (max_iters, max_epochs or target)")
    rng = _rng(rng)
    n = problem.n
    x = np.ones(problem.p) if x0 is None else np.array(x0, dtype=np.float64)
    xp = x.copy()
    J = resolvent
    u = J(x) if J is not None else x
    up = u.copy() if J is not None else xp
    counter = OracleCounter()
    trace = SolverTrace(method=method, n=n, seed=seed)
    if J is not None:
        trace.extra["bfs_residual"] = []
        trace.extra["fbs_residual"] = []
    if diagnostics:
        if x_star is None:
            raise ValueError("diagnostics need x_star")
        if not isinstance(schedule, Sublinear):
            raise ValueError("Lyapunov diagnostics are defined for the sublinear schedule")
    t0 = time.perf_counter()
    estimator.init(problem, u, counter)
    if diagnostics:
        consts = estimator.constants()
    x0norm = float(np.linalg.norm(x))
    res0 = None
    k = 0
    while True:
        # diagnostics at x^k (uncounted)
        if J is None:
            res = float(np.linalg.norm(eval_full(problem, x)))
        else:
            Gu = eval_full(problem, u)
            res = float(np.linalg.norm(Gu + (x - u) / lam))
            trace.extra["bfs_residual"].append(res)
            trace.extra["fbs_residual"].append(float(np.linalg.norm(_fbs(problem, J, lam, u))))
        if res0 is None:
            res0 = res
        trace.k.append(k)
        trace.residual.append(res)
        trace.oracle.append(counter.count)
        if x_star is not None:
            e = (u if J is not None else x) - x_star
            trace.dist2.append(float(e @ e))
        stop = ((max_iters is not None and k >= max_iters)
                or (max_epochs is not None and counter.count >= max_epochs * n)
                or (target is not None and res <= target * res0))
        if stop:
            break
        theta, gamma, eta = schedule.params(k)
        if diagnostics:
            dk = 0.0 if k == 0 else estimator.delta_k(u, up, gamma)
            uk = 0.0 if k == 0 else _u_k(problem, u, up)
            trace.delta_k.append(dk)
            trace.u_k.append(uk)
        before = counter.count
        if k == 0:
            S = estimator.first(u, gamma, counter)
        else:
            S = estimator.draw(u, up, gamma, rng, counter)
        sw = bool(getattr(estimator, "last_switch", False)) and k > 0
        trace.switches.append(sw)
        trace.batch_cost.append(counter.count - before - (n if sw else 0))
        if J is not None:
            S = S + (x - u) / lam - gamma * (xp - up) / lam
        x_new = x + theta * (x - xp) - eta * S
        step_norm = float(np.linalg.norm(x_new - x))
        trace.step_norm.append(step_norm)
        if diagnostics:
            trace.lyapunov.append(lyapunov(problem, x, x_new, x_star, k, schedule.r,
                                           schedule.beta, consts, dk, uk))
        _guard(x_new, x0norm, trace, k)
        xp, x = x, x_new
        if J is not None:
            up, u = u, J(x)
        else:
            up, u = xp, x
        k += 1
    trace.x_final = x.copy()
    trace.wall_time = time.perf_counter() - t0
    return trace


def _fbs(problem, J, lam, u):
    return (u - J(u - lam * eval_full(problem, u))) / lam


def run(problem, estimator, schedule, max_iters=None, max_epochs=None, target=None,
        rng=None, x0=None, x_star=None, diagnostics=False, method=None, seed=None):
    """Run VFKM on G x = 0 and return a SolverTrace."""
    if rng is None and seed is not None:
        rng = seed
    return iterate(problem, estimator, schedule, x0=x0, rng=rng, max_iters=max_iters,
                   max_epochs=max_epochs, target=target, x_star=x_star,
                   diagnostics=diagnostics, method=method or f"vfkm-{estimator.kind}",
                   seed=seed)
