"""Checks that turn the convergence theory into concrete pass/fail results.

Expectations over batches are computed exactly, either by enumerating every
batch (small sample spaces) through the estimators' own draw code, or in
closed form. Claims in total expectation are checked on means over seeds.
"""
from __future__ import annotations

import copy
import itertools
import json
import math
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import estimators as est_mod
from .baselines import run_det_fkm
from .estimators import LooplessSvrg, Saga, constants as est_constants, make_estimator, u_k
from .inclusion import bfs_components, bfs_full, fbs_residual
from .operators import (FiniteSumProblem, MinimaxSpec, eval_full,
                        generate_minimax, reference_solution)
from .solver import (Constant, Sublinear, linear_bound, lyapunov, plan_step_size,
                     rate_constants, run, sublinear_beta_bar)


@dataclass
class CheckResult:
    check_id: str
    status: str  # pass | fail | skipped
    observed: float
    bound: float
    tolerance: float
    seed: Optional[int] = None
    samples: int = 0
    detail: str = ""

    @property
    def passed(self):
        return self.status == "pass"


def _result(check_id, slack, tol, seed=None, samples=0, observed=None, bound=None, detail=""):
    """slack >= -tol passes; observed/bound default to (-slack, 0)."""
    ok = bool(np.isfinite(slack) and slack >= -tol)
    return CheckResult(check_id, "pass" if ok else "fail",
                       float(-slack if observed is None else observed),
                       float(0.0 if bound is None else bound), float(tol), seed, samples, detail)


# ---- batch enumeration ---------------------------------------------------

class FixedRng:
    """Stands in for a Generator so the estimators' own draw code can be
    evaluated on a prescribed batch and switch outcome."""

    def __init__(self, batch, u=1.0):
        self.batch = np.asarray(batch, dtype=np.int64)
        self.u = u

    def integers(self, lo, hi, size):
        assert len(self.batch) == size
        return self.batch.copy()

    def choice(self, n, size, replace=True):
        assert len(self.batch) == size
        return self.batch.copy()

    def random(self):
        return self.u


def batch_law(n, b, replace):
    """List of (batch, probability); None when larger than 10^4."""
    if replace:
        if n ** b > 10 ** 4:
            return None
        w = 1.0 / n ** b
        return [(np.array(t), w) for t in itertools.product(range(n), repeat=b)]
    total = math.comb(n, b)
    if total > 10 ** 4:
        return None
    w = 1.0 / total
    return [(np.array(t), w) for t in itertools.combinations(range(n), b)]


def enumerate_draws(est, x_k, x_km1, gamma):
    """Exact first and second moments of S~ by running draw on every batch.
    Returns (mean, E||S~ - S||^2) or None if the sample space is too big."""
    law = batch_law(est.problem.n, est.b, est.replace)
    if law is None:
        return None
    P = est.problem
    S_true = eval_full(P, x_k) - gamma * eval_full(P, x_km1)
    mean = np.zeros(P.p)
    var = 0.0
    for batch, w in law:
        e = copy.deepcopy(est)
        S = e.draw(x_k, x_km1, gamma, FixedRng(batch))
        mean += w * S
        var += w * float((S - S_true) @ (S - S_true))
    return mean, var


def enumerate_next_states(est, x_k, x_km1, gamma):
    """Every post-draw estimator state with its probability."""
    out = []
    if isinstance(est, LooplessSvrg):
        law = [(np.zeros(est.b, dtype=np.int64), 1.0)]
        for u, w in ((0.0, est.p_switch), (1.0, 1 - est.p_switch)):
            e = copy.deepcopy(est)
            e.draw(x_k, x_km1, gamma, FixedRng(law[0][0], u))
            out.append((e, w))
        return out
    law = batch_law(est.problem.n, est.b, est.replace)
    if law is None:
        return None
    for batch, w in law:
        e = copy.deepcopy(est)
        e.draw(x_k, x_km1, gamma, FixedRng(batch))
        out.append((e, w))
    return out


def monte_carlo_draws(est, x_k, x_km1, gamma, draws, rng):
    """Sample mean, standard error and mean squared deviation of S~."""
    P = est.problem
    S_true = eval_full(P, x_k) - gamma * eval_full(P, x_km1)
    out = np.empty((draws, P.p))
    for j in range(draws):
        e = copy.deepcopy(est)
        out[j] = e.draw(x_k, x_km1, gamma, rng)
    dev = out - S_true
    sq = np.sum(dev * dev, axis=1)
    return (out.mean(axis=0), out.std(axis=0, ddof=1) / math.sqrt(draws),
            sq.mean(), sq.std(ddof=1) / math.sqrt(draws))


# ---- estimator laws -----------------------------------------------------

def random_affine_problem(n, p, rng, scale=1.0):
    mats = rng.standard_normal((n, p, p)) * scale
    offsets = rng.standard_normal((n, p))
    return FiniteSumProblem(mats, offsets)


def _random_estimator(kind, problem, b, p_switch, rng, replace=False):
    x0 = rng.standard_normal(problem.p)
    est = make_estimator(kind, b, p_switch, **({"replace": replace} if kind == "saga" else {}))
    est.init(problem, x0)
    if kind == "svrg":
        est.w = rng.standard_normal(problem.p)
        est.Gw = eval_full(problem, est.w)
    elif kind == "saga":
        Y = rng.standard_normal((problem.n, problem.p))
        est.table = np.einsum("nij,nj->ni", problem.mats, Y) + problem.offsets
        est.mean = est.table.mean(axis=0)
    return est


def check_definition1(kind, n, b, p_switch=None, trials=40, seed=0, p=4, replace=False,
                      tol=1e-10):
    """All three lines of the estimator definition on random states.

    Line 3 is checked on three-point trajectories x^{k-2}, x^{k-1}, x^k with
    gamma values from the sublinear schedule (one trial in four uses
    gamma = 0 throughout).
    """
    rng = np.random.default_rng(seed)
    P = random_affine_problem(n, p, rng)
    probe = make_estimator(kind, b, p_switch, **({"replace": replace} if kind == "saga" else {}))
    probe.init(P, np.zeros(p))
    c = probe.constants(simplified=False)
    worst = [np.inf, np.inf, np.inf]
    scale = [0.0, 0.0, 0.0]
    enumerated = [True, True]
    for t in range(trials):
        if t % 4 == 3:
            g1 = g0 = 0.0
        else:
            k = int(rng.integers(1, 60))
            r = 2 + 30 * rng.random()
            g0, g1 = (k - 1) / (k - 1 + r), k / (k + r)
        x2, x1, x0 = (rng.standard_normal(p) for _ in range(3))
        est = _random_estimator(kind, P, b, p_switch, rng, replace)
        S_true = eval_full(P, x0) - g1 * eval_full(P, x1)
        # lines 1 and 2 at (x^k, x^{k-1}) with the current state
        enum = enumerate_draws(est, x0, x1, g1)
        if enum is None:
            enumerated[0] = False
            mean, var = est.exact_conditional_mean(x0, x1, g1), est.exact_variance(x0, x1, g1)
        else:
            mean, var = enum
        worst[0] = min(worst[0], -float(np.max(np.abs(mean - S_true))))
        dk = est.delta_k(x0, x1, g1)
        worst[1] = min(worst[1], dk - var)
        scale[1] = max(scale[1], dk)
        # line 3: state at k-1, draw there, then Delta_k in expectation
        states = enumerate_next_states(est, x1, x2, g0)
        if states is None:
            enumerated[1] = False
            e_next = est.expected_next_delta(x1, x0, g1)
        else:
            e_next = sum(w * s.delta_k(x0, x1, g1) for s, w in states)
        d_prev = est.delta_k(x1, x2, g0)
        U1, U0 = u_k(P, x0, x1), u_k(P, x1, x2)
        lhs = e_next / (1 - g1) ** 2
        rhs = ((1 - c.rho) / (1 - g0) ** 2 * d_prev + c.theta_big / (1 - g1) ** 2 * U1
               + c.theta_hat / (1 - g0) ** 2 * U0)
        worst[2] = min(worst[2], rhs - lhs)
        scale[2] = max(scale[2], rhs)
    tag = f"{kind}(n={n},b={b}" + (f",p={p_switch})" if kind == "svrg" else ")")
    how = ["enumerated" if enumerated[0] else "closed-form",
           "enumerated" if enumerated[0] else "closed-form",
           "enumerated" if enumerated[1] else "closed-form"]
    return [
        _result(f"def1.line1.{tag}", worst[0], tol, seed, trials, detail=how[0]),
        _result(f"def1.line2.{tag}", worst[1], tol, seed, trials, detail=how[1]),
        _result(f"def1.line3.{tag}", worst[2], tol, seed, trials, detail=how[2]),
    ]


# ---- constants ----------------------------------------------------------

def svrg_grid(points=100):
    """(b, p) pairs covering 1 <= b p^2 <= 32."""
    m = int(round(math.sqrt(points)))
    ps = np.linspace(0.05, 0.95, m)
    qs = np.geomspace(1.0, 32.0, points // m)
    return [(q / pp ** 2, pp) for pp in ps for q in qs]


def saga_grid(n, points=100, b_max=None):
    hi = min(n, 16 * n ** (2 / 3)) if b_max is None else b_max
    return list(np.linspace(1.0, hi, points))


def check_constants(kind, n=None, points=100, r=3, L=1.0):
    """Closed-form bounds on C2, C3 and the beta interval over a grid."""
    out = []
    if kind == "svrg":
        grid = svrg_grid(points)
        c2b, c3b = 2360.0, 3353.0
        lo, hi = 1 / (130 * L), 1 / (6 * L)
        cases = [(b, pp, b) for b, pp in grid]
    else:
        grid = saga_grid(n, points)
        c2b, c3b = 2559.0, 3636.0
        lo, hi = 1 / (2 * L * (1 + 64 * n * n)), 1 / (4 * L)
        cases = [(b, None, b) for b in grid]
    c2max = c3max = -np.inf
    lam_min = np.inf
    beta_slack = np.inf
    bbar_gap = np.inf
    beta_cap_slack = np.inf
    for b, pp, _ in cases:
        c = est_constants(kind, n or 1, b, pp, simplified=True) if kind == "svrg" else \
            est_mod.EstimatorConstants(b / (2 * n), 4 * n / b ** 2, 4 * n / b ** 2, True)
        if kind == "svrg":
            beta = b * pp ** 2 / (2 * L * (b * pp ** 2 + 64))
        else:
            beta = b ** 3 / (2 * L * (b ** 3 + 64 * n ** 2))
        rc = rate_constants(r, beta, L, c)
        c2max, c3max = max(c2max, rc.C2), max(c3max, rc.C3)
        lam_min = min(lam_min, rc.Lam)
        bbar_gap = min(bbar_gap, abs(beta - rc.beta_bar / 2) / rc.beta_bar)
        beta_cap_slack = min(beta_cap_slack, 1 / (2 * L) - beta)
        if kind == "svrg":
            beta_slack = min(beta_slack, beta - lo, hi - beta)
    if kind == "saga":
        # the interval [lo, 1/(4L)] needs b^3 <= 64 n^2, i.e. b <= 4 n^(2/3)
        for b in saga_grid(n, points, b_max=min(n, 4 * n ** (2 / 3))):
            beta = b ** 3 / (2 * L * (b ** 3 + 64 * n ** 2))
            beta_slack = min(beta_slack, beta - lo, hi - beta)
    name = f"{kind}" + (f"(n={n})" if n else "")
    out.append(CheckResult(f"const.C2.{name}", "pass" if c2max <= c2b else "fail",
                           c2max, c2b, 0.0, samples=len(cases)))
    out.append(CheckResult(f"const.C3.{name}", "pass" if c3max <= c3b else "fail",
                           c3max, c3b, 0.0, samples=len(cases)))
    out.append(_result(f"const.beta_interval.{name}", beta_slack * L, 1e-15,
                       samples=len(cases),
                       detail="" if kind == "svrg" else "checked for b <= 4 n^(2/3)"))
    out.append(_result(f"const.Lambda_positive.{name}", lam_min, 0.0, samples=len(cases),
                       observed=lam_min, bound=0.0))
    out.append(_result(f"const.beta_is_half_beta_bar.{name}", -bbar_gap, 1e-12,
                       samples=len(cases)))
    if kind == "saga":
        out.append(_result(f"const.beta_below_half_over_L.{name}", beta_cap_slack * L, 0.0,
                           samples=len(cases)))
    return out


# ---- Lyapunov descent -----------------------------------------------------

def descent_rhs(problem, x_km1, x_k, x_star, k, r, beta, c, U):
    """Lower bound on E_{k-1} - E_k[E_k] from the analysis (mu = 1)."""
    L = problem.L
    tk = k + r + 1
    Th = c.theta_big + c.theta_hat
    lam_k = 4 * beta * ((k / (k + r)) * (1 / L - beta) - (beta * Th / c.rho if Th else 0.0))
    d = x_k - x_km1
    Gp = eval_full(problem, x_km1)
    e = x_km1 - x_star
    return (lam_k * (tk - 1) ** 2 * U + (2 * tk - r - 1) * (d @ d)
            + 4 * r * beta * (r - 1) * (Gp @ e - beta * (Gp @ Gp)))


def check_lyapunov_fullbatch(problem, r=3, beta=None, steps=500, x_star=None, tag=""):
    beta = 1 / (2 * problem.L) if beta is None else beta
    x_star = reference_solution(problem) if x_star is None else x_star
    tr = run_det_fkm(problem, r, beta, max_iters=steps, x_star=x_star, diagnostics=True)
    E = np.asarray(tr.lyapunov)
    E0 = E[0]
    mono = float(np.min(E[:-1] - E[1:])) if len(E) > 1 else 0.0
    return _result(f"lyapunov.fullbatch{tag}", mono, 1e-9 * E0, samples=steps,
                   observed=mono, bound=-1e-9 * E0,
                   detail=f"min E_(k-1) - E_k over {steps} steps")


def check_lyapunov_saga_exact(problem, r=3, beta=None, steps=200, seed=0, b=1):
    """Exact conditional descent of E_k for SAGA on a tiny problem.

    At every k the expectation is over the batch that refreshes the table at
    step k-1 and the batch drawn at step k, both enumerated, starting from
    the states visited by an actual run.
    """
    n = problem.n
    c = est_constants("saga", n, b, simplified=False)
    L = problem.L
    beta = sublinear_beta_bar(r, L, c) / 2 if beta is None else beta
    sched = Sublinear(r, beta)
    x_star = reference_solution(problem)
    rng = np.random.default_rng(seed)
    est = Saga(b).init(problem, np.ones(problem.p))
    law = batch_law(n, b, False)
    xs = [np.ones(problem.p)]  # xs[j] = x^j
    snaps = []
    # run the real trajectory first, keeping the pre-draw states
    x, xp = xs[0], xs[0]
    for k in range(steps + 1):
        snaps.append(copy.deepcopy(est))
        th, ga, eta = sched.params(k)
        S = est.first(x, ga) if k == 0 else est.draw(x, xp, ga, rng)
        xp, x = x, x + th * (x - xp) - eta * S
        xs.append(x)
    worst = np.inf
    E0 = None
    for k in range(1, steps + 1):
        x_km2 = xs[k - 2] if k >= 2 else xs[0]
        x_km1, x_k = xs[k - 1], xs[k]
        th0, g0, _ = sched.params(k - 1)
        th1, g1, eta1 = sched.params(k)
        snap = snaps[k - 1]
        if k == 1:
            d_prev, U_prev = 0.0, 0.0
        else:
            d_prev, U_prev = snap.delta_k(x_km1, x_km2, g0), u_k(problem, x_km1, x_km2)
        E_prev = lyapunov(problem, x_km1, x_k, x_star, k - 1, r, beta, c, d_prev, U_prev)
        if E0 is None:
            E0 = E_prev
        U = u_k(problem, x_k, x_km1)
        if k == 1:
            states = [(copy.deepcopy(snap), 1.0)]
        else:
            states = [(e, w) for e, w in _refresh_states(snap, law, x_km1, x_km2, g0)]
        expE = 0.0
        for st, w in states:
            dk = st.delta_k(x_k, x_km1, g1)
            for batch, wb in law:
                e = copy.deepcopy(st)
                S = e.draw(x_k, x_km1, g1, FixedRng(batch))
                x_next = x_k + th1 * (x_k - x_km1) - eta1 * S
                expE += w * wb * lyapunov(problem, x_k, x_next, x_star, k, r, beta, c, dk, U)
        rhs = descent_rhs(problem, x_km1, x_k, x_star, k, r, beta, c, U)
        worst = min(worst, E_prev - expE - rhs)
    return _result("lyapunov.saga_exact", worst, 1e-9 * E0, seed, steps,
                   detail=f"n={n}, b={b}, {len(law)}x{len(law)} enumeration")


def _refresh_states(snap, law, x_km1, x_km2, g0):
    for batch, w in law:
        e = copy.deepcopy(snap)
        e.draw(x_km1, x_km2, g0, FixedRng(batch))
        yield e, w


# ---- rates ----------------------------------------------------------------

def loglog_slope(values, k_lo=200, k_hi=2000):
    ks = np.arange(k_lo, k_hi + 1)
    v = np.asarray(values)[k_lo:k_hi + 1]
    return float(np.polyfit(np.log(ks), np.log(v), 1)[0])


def small_o_proxy(values, k_lo=200):
    """Descriptive tail statistics of k^2 * values[k] (reported, never asserted).

    ratio: mean over the last quarter of the tail divided by the mean over
    the first quarter; below 1 means k^2 * values is still shrinking.
    decreasing: fraction of tail steps where the running minimum drops.
    """
    v = np.asarray(values, dtype=np.float64)
    k = np.arange(len(v), dtype=np.float64)
    w = (k * k * v)[k_lo:]
    q = max(len(w) // 4, 1)
    run_min = np.minimum.accumulate(w)
    return {"ratio": float(w[-q:].mean() / w[:q].mean()),
            "decreasing": float(np.mean(np.diff(run_min) < 0)) if len(w) > 1 else 0.0}


def seeded_runs(problem, kind, schedule, seeds, iters, b=None, p_switch=None, x_star=None,
                base_seed=0):
    """Residual^2 (and squared distance when x_star given) for each seed."""
    R, D = [], []
    for s in range(seeds):
        est = make_estimator(kind, b or 1, p_switch)
        tr = run(problem, est, schedule, max_iters=iters, seed=base_seed + s, x_star=x_star)
        R.append(np.square(tr.residual))
        if x_star is not None:
            D.append(tr.dist2)
    return np.array(R), (np.array(D) if D else None)


def check_sublinear_bound(problem, kind, seeds=20, iters=2000, r=3, b=31, p_switch=None,
                         tag="", base_seed=0):
    n = problem.n
    p_switch = n ** (-1 / 3) if (kind == "svrg" and p_switch is None) else p_switch
    plan = plan_step_size(kind, n, b, p_switch, problem.L, r=r)
    c = est_constants(kind, n, b, p_switch, simplified=True)
    x_star = reference_solution(problem)
    R0 = float(np.linalg.norm(np.ones(problem.p) - x_star))
    R, _ = seeded_runs(problem, kind, Sublinear(r, plan.beta), seeds, iters, b, p_switch,
                       base_seed=base_seed)
    mean = R.mean(axis=0)
    k = np.arange(iters + 1)
    rc = rate_constants(r, plan.beta, problem.L, c)
    bound = rc.C3 * R0 ** 2 / (plan.beta ** 2 * (k + r - 1) * (k + r + 2))
    ratio = float(np.max(mean / bound))
    return CheckResult(f"rate.sublinear.{kind}{tag}", "pass" if np.all(mean <= bound) else "fail",
                       ratio, 1.0, 0.0, base_seed, seeds,
                       detail=f"max mean/bound over k<={iters}; beta*L={plan.beta * problem.L:.4g}")


def check_linear_rate_bound(problem, kind, seeds=20, iters=3000, b=31, p_switch=None, tag="",
                         base_seed=0):
    n = problem.n
    p_switch = n ** (-1 / 3) if (kind == "svrg" and p_switch is None) else p_switch
    L, sigma = problem.L, problem.sigma
    if sigma <= 0:
        return CheckResult(f"rate.linear.{kind}{tag}", "skipped", 0.0, 0.0, 0.0, base_seed, 0,
                           detail="sigma = 0")
    plan = plan_step_size(kind, n, b, p_switch, L, sigma, regime="linear")
    x_star = reference_solution(problem)
    R0 = float(np.linalg.norm(np.ones(problem.p) - x_star))
    _, D = seeded_runs(problem, kind, Constant(plan.beta), seeds, iters, b, p_switch,
                       x_star=x_star, base_seed=base_seed)
    mean = D.mean(axis=0)
    k = np.arange(iters + 1)
    bound = linear_bound(k, L, sigma, plan.beta, R0)
    ok = bool(np.all(mean <= bound))
    return CheckResult(f"rate.linear.{kind}{tag}", "pass" if ok else "fail",
                       float(np.max(mean / bound)), 1.0, 0.0, base_seed, seeds,
                       detail=f"max mean/bound; omega={plan.omega:.3g}")


# ---- operator properties --------------------------------------------------

def check_cocoercivity_samples(problem, pairs=1000, seed=0, scale=3.0):
    """Sampled averaged co-coercivity, Lipschitz bound and sigma bound."""
    rng = np.random.default_rng(seed)
    L = problem.L
    X = rng.standard_normal((pairs, problem.p)) * scale
    Y = rng.standard_normal((pairs, problem.p)) * scale
    D = X - Y
    GD = np.einsum("nij,mj->mni", problem.mats, D)  # (pairs, n, p)
    inner = np.einsum("mni,mi->m", GD, D) / problem.n
    sq = np.einsum("mni,mni->m", GD, GD) / problem.n
    cc = float(np.min(inner - sq / L))
    GbarD = D @ problem.mean_matrix.T
    lip = float(np.min(L * np.linalg.norm(D, axis=1) - np.linalg.norm(GbarD, axis=1)))
    out = [_result("operators.cocoercivity", cc, 1e-8, seed, pairs),
           _result("operators.lipschitz", lip, 1e-8, seed, pairs)]
    if problem.sigma > 0:
        xs = reference_solution(problem)
        E = X - xs
        GX = X @ problem.mean_matrix.T + problem.mean_offset
        s = float(np.min(np.einsum("mi,mi->m", GX, E) - problem.sigma * np.sum(E * E, axis=1)))
        out.append(_result("operators.sigma", s, 1e-8, seed, pairs))
    return out


def check_bfs(ip, pairs=1000, seed=0, scale=2.0, per_component=True, tol=1e-8,
              x_hint=None, tag=""):
    rng = np.random.default_rng(seed)
    L = ip.L
    p = ip.g.p
    cc = ne = dom = np.inf
    for _ in range(pairs):
        x = rng.standard_normal(p) * scale
        y = rng.standard_normal(p) * scale
        D = bfs_components(ip, x) - bfs_components(ip, y)
        d = x - y
        if per_component:
            cc = min(cc, float(np.min(D @ d - np.sum(D * D, axis=1) / L)))
        else:
            cc = min(cc, float(np.mean(D @ d) - np.mean(np.sum(D * D, axis=1)) / L))
        ne = min(ne, float(np.linalg.norm(d) - np.linalg.norm(ip.J(x) - ip.J(y))))
        gl = np.linalg.norm(bfs_full(ip, x))
        dom = min(dom, float(gl - np.linalg.norm(fbs_residual(ip, ip.J(x)))))
    kind = getattr(ip.t, "kind", "?")
    mode = "component" if per_component else "averaged"
    out = [_result(f"bfs.cocoercivity.{mode}.{kind}{tag}", cc, tol, seed, pairs),
           _result(f"bfs.nonexpansive.{kind}{tag}", ne, 1e-10, seed, pairs),
           _result(f"bfs.residual_domination.{kind}{tag}", dom, 1e-10, seed, pairs)]
    if x_hint is not None:
        eps = float(np.linalg.norm(bfs_full(ip, x_hint)))
        f = float(np.linalg.norm(fbs_residual(ip, ip.J(x_hint))))
        out.append(_result(f"bfs.zero_consistency.{kind}{tag}", eps - f, 1e-10, seed, 1,
                           observed=f, bound=eps))
    return out


# ---- accounting -----------------------------------------------------------

def audit_svrg_oracle(trace, n, b):
    """Recompute n + sum_k (3b + switch_k n) from the per-iteration log."""
    stochastic = trace.switches[1:]
    expected = n + sum(3 * b + (n if s else 0) for s in stochastic)
    counted = trace.oracle[-1]
    costs_ok = all(c == 3 * b for c in trace.batch_cost[1:])
    ok = counted == expected and costs_ok
    return CheckResult("accounting.svrg", "pass" if ok else "fail", float(counted),
                       float(expected), 0.0, trace.seed, len(stochastic),
                       detail=f"switches={sum(stochastic)}")


# ---- suites and reports ----------------------------------------------------

def desk_instances(count=10, seed=0, n=500, p1=13, p2=7):
    from .harness import instance_seed
    return [generate_minimax(MinimaxSpec(p1, p2, n, instance_seed(seed, i)))
            for i in range(count)]


def run_suite(level="fast", seed=0):
    results = []
    t0 = time.perf_counter()
    trials = 10 if level == "fast" else 40
    for b in (1, 3, 10):
        for ps in (0.1, 0.5):
            results += check_definition1("svrg", 10, b, ps, trials=trials, seed=seed)
        results += check_definition1("saga", 10, b, trials=trials, seed=seed)
    results += check_constants("svrg")
    for n in (500, 5000):
        results += check_constants("saga", n)
    small = generate_minimax(MinimaxSpec(3, 2, 4, seed))
    results.append(check_lyapunov_saga_exact(small, steps=50 if level == "fast" else 200,
                                             seed=seed))
    count = 2 if level == "fast" else 10
    insts = desk_instances(count, seed, n=100 if level == "fast" else 500)
    for i, P in enumerate(insts):
        results.append(check_lyapunov_fullbatch(P, tag=f".i{i}"))
        results += check_cocoercivity_samples(P, pairs=200, seed=seed)
    if level == "full":
        for i, P in enumerate(insts):
            for kind in ("svrg", "saga"):
                results.append(check_sublinear_bound(P, kind, seeds=20, tag=f".i{i}"))
                results.append(check_linear_rate_bound(P, kind, seeds=20, tag=f".i{i}"))
    elapsed = time.perf_counter() - t0
    return results, elapsed


def report_records(results):
    return [asdict(r) for r in results]


def format_report(results):
    lines = []
    for r in results:
        lines.append(f"{r.status.upper():7s} {r.check_id:48s} observed={r.observed:.4g} "
                     f"bound={r.bound:.4g} seed={r.seed} {r.detail}")
    nfail = sum(r.status == "fail" for r in results)
    lines.append(f"{len(results)} checks, {nfail} failed")
    return "\n".join(lines)


def write_report(path, results, elapsed=None):
    with open(path, "w") as fh:
        json.dump({"elapsed": elapsed, "results": report_records(results)}, fh, indent=1)
