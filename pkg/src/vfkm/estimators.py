"""Unbiased variance-reduced estimators of S^k = G x^k - gamma_k G x^{k-1}.

Three variants share one interface:

* FullBatch    exact S^k (caches G x^{k-1})
* LooplessSvrg control variate at a snapshot w refreshed with probability p
* Saga         control variate from a table of past component values

Each estimator is driven with the current and previous points and returns the
estimate. Estimators never see the iterate update itself, so the inclusion
scheme can feed them resolvent points instead of raw iterates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import eval_all, eval_batch, eval_full


@dataclass(frozen=True)
class EstimatorConstants:
    rho: float
    theta_big: float
    theta_hat: float
    simplified: bool = False


KINDS = ("full", "svrg", "saga")


def constants(kind, n, b=1, p_switch=None, simplified=False):
    """(rho, Theta, Theta_hat) of the variance recursion for each estimator."""
    if kind == "full":
        return EstimatorConstants(1.0, 0.0, 0.0, simplified)
    if kind == "svrg":
        p = p_switch
        if p is None or not 0 < p < 1:
            raise ValueError(f"switch probability must lie in (0, 1), got {p}")
        if b < 1:
            raise ValueError("batch size must be >= 1")
        if simplified:
            th = 4.0 / (b * p)
            return EstimatorConstants(p / 2, th, th, True)
        return EstimatorConstants(p / 2, (4 - 6 * p + 3 * p * p) / (b * p),
                                  2 * (2 - 3 * p + p * p) / (b * p), False)
    if kind == "saga":
        if not 1 <= b <= n:
            raise ValueError(f"SAGA needs 1 <= b <= n, got b={b}, n={n}")
        if simplified:
            th = 4.0 * n / (b * b)
            return EstimatorConstants(b / (2 * n), th, th, True)
        return EstimatorConstants(
            b / (2 * n),
            (2 * (n - b) * (2 * n + b) + b * b) / (n * b * b),
            2 * (n - b) * (2 * n + b) / (n * b * b),
            False)
    raise ValueError(f"unknown estimator kind {kind!r}")


def sample_variance(X, b, replace):
    """Exact E||mean_B X - mean X||^2 for a uniform batch of size b."""
    n = X.shape[0]
    xbar = X.mean(axis=0)
    spread = np.mean(np.sum(X * X, axis=1)) - xbar @ xbar
    v = spread / b
    if not replace:
        v *= (n - b) / (n - 1) if n > 1 else 0.0
    return max(v, 0.0)


class Estimator:
    kind = None
    b = 1

    def init(self, problem, x0, counter=None):
        raise NotImplementedError

    def first(self, x0, gamma0, counter=None):
        """S~^0 = (1 - gamma_0) G x^0, reusing the initialization pass."""
        raise NotImplementedError

    def draw(self, x_k, x_km1, gamma, rng, counter=None):
        raise NotImplementedError

    def refs(self):
        """Reference rows (n, p) subtracted inside the control variate."""
        raise NotImplementedError

    def _require(self):
        if getattr(self, "problem", None) is None:
            raise RuntimeError("estimator used before init()")

    def _check(self, *xs):
        for x in xs:
            if np.shape(x) != (self.problem.p,):
                raise ValueError(f"dimension mismatch: expected ({self.problem.p},), "
                                 f"got {np.shape(x)}")

    def constants(self, simplified=False):
        raise NotImplementedError

    # -- diagnostics (never counted) --

    def _X(self, x_k, x_km1, gamma, refs=None):
        refs = self.refs() if refs is None else refs
        P = self.problem
        return eval_all(P, x_k) - gamma * eval_all(P, x_km1) - (1 - gamma) * refs

    def exact_conditional_mean(self, x_k, x_km1, gamma):
        """E[S~ | state] by averaging over every index; equals S^k."""
        self._require()
        X = self._X(x_k, x_km1, gamma)
        return (1 - gamma) * self._ref_mean() + X.mean(axis=0)

    def exact_variance(self, x_k, x_km1, gamma):
        """E[||S~ - S||^2 | state] in closed form."""
        self._require()
        return sample_variance(self._X(x_k, x_km1, gamma), self.b, self.replace)

    def delta_k(self, x_k, x_km1, gamma):
        self._require()
        X = self._X(x_k, x_km1, gamma)
        return float(np.sum(X * X)) / (self.problem.n * self.b)


class FullBatch(Estimator):
    kind = "full"
    replace = True

    def __init__(self):
        self.problem = None
        self._cache = None

    def init(self, problem, x0, counter=None):
        self.problem = problem
        self._cache = None
        return self

    def _G(self, x, counter):
        if self._cache is not None and np.array_equal(self._cache[0], x):
            return self._cache[1]
        v = eval_full(self.problem, x, counter)
        self._cache = (x.copy(), v)
        return v

    def first(self, x0, gamma0, counter=None):
        self._require()
        return (1 - gamma0) * self._G(x0, counter)

    def draw(self, x_k, x_km1, gamma, rng=None, counter=None):
        self._require()
        self._check(x_k, x_km1)
        prev = self._G(x_km1, counter) if gamma != 0 else 0.0
        return self._G(x_k, counter) - gamma * prev

    def refs(self):
        return np.zeros((self.problem.n, self.problem.p))

    def _ref_mean(self):
        return np.zeros(self.problem.p)

    def exact_variance(self, x_k, x_km1, gamma):
        return 0.0

    def delta_k(self, x_k, x_km1, gamma):
        return 0.0

    def constants(self, simplified=False):
        return constants("full", self.problem.n if self.problem else 1)


class LooplessSvrg(Estimator):
    """Loopless SVRG. Batches are drawn i.i.d. with replacement; after each
    stochastic draw the snapshot moves to the current point with
    probability p (a move costs one full pass)."""
    kind = "svrg"
    replace = True

    def __init__(self, b, p_switch):
        if b < 1:
            raise ValueError("batch size must be >= 1")
        if not 0 < p_switch < 1:
            raise ValueError(f"switch probability must lie in (0, 1), got {p_switch}")
        self.b = int(b)
        self.p_switch = float(p_switch)
        self.problem = None
        self.last_switch = False
        self.last_batch = None

    def init(self, problem, x0, counter=None):
        self.problem = problem
        self.w = np.array(x0, dtype=np.float64)
        self.Gw = eval_full(problem, self.w, counter)
        self.last_switch = False
        return self

    def first(self, x0, gamma0, counter=None):
        self._require()
        if not np.array_equal(x0, self.w):
            raise ValueError("first() must be called at the initialization point")
        return (1 - gamma0) * self.Gw

    def draw(self, x_k, x_km1, gamma, rng, counter=None):
        self._require()
        self._check(x_k, x_km1)
        P = self.problem
        idx = rng.integers(0, P.n, self.b)
        pts = [x_k, self.w] if gamma == 0 else [x_k, self.w, x_km1]
        V = eval_batch(P, idx, np.stack(pts, axis=1), counter).mean(axis=0)
        S = (1 - gamma) * (self.Gw - V[:, 1]) + V[:, 0]
        if gamma != 0:
            S = S - gamma * V[:, 2]
        self.last_batch = idx
        self.last_switch = bool(rng.random() < self.p_switch)
        if self.last_switch:
            self.w = np.array(x_k, dtype=np.float64)
            self.Gw = eval_full(P, self.w, counter)
        return S

    def refs(self):
        return eval_all(self.problem, self.w)

    def _ref_mean(self):
        return self.Gw

    def expected_next_delta(self, x_k, x_next, gamma_next):
        """E[Delta_{k+1}] over the snapshot move that follows the draw at x_k."""
        self._require()
        stay = self.delta_k(x_next, x_k, gamma_next)
        moved = self._X(x_next, x_k, gamma_next, refs=eval_all(self.problem, x_k))
        moved = float(np.sum(moved * moved)) / (self.problem.n * self.b)
        return (1 - self.p_switch) * stay + self.p_switch * moved

    def constants(self, simplified=False):
        return constants("svrg", self.problem.n if self.problem else 1, self.b,
                         self.p_switch, simplified)


class Saga(Estimator):
    """SAGA. Batches are drawn uniformly without replacement by default.
    After each draw the table rows in the batch are set to G_i x^k, which is
    the value the next iteration sees as G_i x^{k-1}."""
    kind = "saga"

    def __init__(self, b, replace=False, refresh_every=None):
        if b < 1:
            raise ValueError("batch size must be >= 1")
        self.b = int(b)
        self.replace = bool(replace)
        self.refresh_every = refresh_every
        self.problem = None
        self.last_batch = None

    def init(self, problem, x0, counter=None):
        if self.b > problem.n:
            raise ValueError(f"SAGA needs b <= n, got b={self.b}, n={problem.n}")
        self.problem = problem
        x0 = np.asarray(x0, dtype=np.float64)
        if counter is not None:
            counter.add(problem.n)
        self.table = eval_all(problem, x0)
        self.mean = self.table.mean(axis=0)
        self._updates = 0
        self._every = self.refresh_every or problem.n
        return self

    def first(self, x0, gamma0, counter=None):
        self._require()
        return (1 - gamma0) * self.mean

    def _batch(self, rng):
        n = self.problem.n
        if self.replace:
            return rng.integers(0, n, self.b)
        return rng.choice(n, self.b, replace=False)

    def draw(self, x_k, x_km1, gamma, rng, counter=None):
        self._require()
        self._check(x_k, x_km1)
        P = self.problem
        idx = self._batch(rng)
        pts = [x_k] if gamma == 0 else [x_k, x_km1]
        V = eval_batch(P, idx, np.stack(pts, axis=1), counter)
        cur = V[:, :, 0]
        S = (1 - gamma) * (self.mean - self.table[idx].mean(axis=0)) + cur.mean(axis=0)
        if gamma != 0:
            S = S - gamma * V[:, :, 1].mean(axis=0)
        self.last_batch = idx
        self._store(idx, cur)
        return S

    def _store(self, idx, rows):
        if self.replace:
            # duplicate indices keep the last write
            uniq, last = np.unique(idx[::-1], return_index=True)
            rows = rows[::-1][last]
        else:
            uniq = idx
        self.mean = self.mean + (rows - self.table[uniq]).sum(axis=0) / self.problem.n
        self.table[uniq] = rows
        self._updates += len(uniq)
        if self._updates >= self._every:
            self.mean = self.table.mean(axis=0)
            self._updates = 0

    def refs(self):
        return self.table

    def _ref_mean(self):
        return self.mean

    def inclusion_probability(self):
        n, b = self.problem.n, self.b
        return 1 - (1 - 1 / n) ** b if self.replace else b / n

    def expected_next_delta(self, x_k, x_next, gamma_next):
        """E[Delta_{k+1}] over which rows the draw at x_k overwrote."""
        self._require()
        P = self.problem
        pi = self.inclusion_probability()
        old = self._X(x_next, x_k, gamma_next)
        new = self._X(x_next, x_k, gamma_next, refs=eval_all(P, x_k))
        tot = (1 - pi) * np.sum(old * old, axis=1) + pi * np.sum(new * new, axis=1)
        return float(tot.sum()) / (P.n * self.b)

    def constants(self, simplified=False):
        return constants("saga", self.problem.n if self.problem else self.b, self.b,
                         None, simplified)


def make_estimator(kind, b=1, p_switch=None, **kw):
    if kind == "full":
        return FullBatch()
    if kind == "svrg":
        return LooplessSvrg(b, p_switch)
    if kind == "saga":
        return Saga(b, **kw)
    raise ValueError(f"unknown estimator kind {kind!r}")


def u_k(problem, x_k, x_km1):
    """U_k = (1/n) sum_i ||G_i x^k - G_i x^{k-1}||^2 (diagnostic)."""
    D = eval_all(problem, x_k) - eval_all(problem, x_km1)
    return float(np.sum(D * D)) / problem.n
