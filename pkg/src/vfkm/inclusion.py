"""Finite-sum inclusions 0 in Gu + Tu via backward-forward splitting.

With J = J_{lam T} the operators

    G_{i,lam} x = G_i(J x) + (x - J x) / lam

are co-coercive (averaged over i) when G is, and zeros of their mean map to
solutions of the inclusion through u = J x. The same VFKM loop then applies
with the estimator fed resolvent points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operators import certify_cocoercivity, eval_component, eval_full
from .solver import iterate


# ---- maximal operators ----------------------------------------------------

class ZeroOperator:
    kind = "zero"
    nu = 0.0

    def resolvent(self, lam, x):
        return np.asarray(x, dtype=np.float64)

    def descriptor(self):
        return {"t_kind": np.array(self.kind)}


def project_simplex(v):
    """Euclidean projection onto {z >= 0, sum z = 1} by sorting."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    j = np.arange(1, v.size + 1)
    k = np.nonzero(u - css / j > 0)[0][-1]
    tau = css[k] / (k + 1)
    return np.maximum(v - tau, 0.0)


@dataclass(frozen=True)
class SimplexNormalCone:
    """Normal cone of a product of two unit simplices (blocks of size p1, p2)."""
    p1: int
    p2: int
    kind = "simplex"
    nu = 0.0

    def resolvent(self, lam, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.p1 + self.p2:
            raise ValueError(f"dimension mismatch: expected {self.p1 + self.p2}")
        return np.concatenate([project_simplex(x[:self.p1]), project_simplex(x[self.p1:])])

    def descriptor(self):
        return {"t_kind": np.array(self.kind), "t_p1": np.array(self.p1),
                "t_p2": np.array(self.p2)}


class AffineCoHypo:
    """T u = A u + c with A symmetric invertible; co-hypomonotone with
    nu = max(0, -lambda_min(A^{-1}))."""
    kind = "affine"

    def __init__(self, A, c, nu=None):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
            raise ValueError("affine T needs a symmetric square matrix")
        self.A = A
        self.c = np.asarray(c, dtype=np.float64)
        ev = np.linalg.eigvalsh(A)
        if np.min(np.abs(ev)) < 1e-12 * max(1.0, np.abs(ev).max()):
            raise ValueError("affine T needs an invertible matrix")
        nu_calc = max(0.0, -float(np.min(1.0 / ev)))
        if nu is not None and abs(nu - nu_calc) > 1e-10:
            raise ValueError(f"stored nu {nu} disagrees with recomputed {nu_calc}")
        self.nu = nu_calc
        self._fact = {}

    def resolvent(self, lam, x):
        if lam not in self._fact:
            K = np.eye(self.A.shape[0]) + lam * self.A
            if abs(np.linalg.det(K)) < 1e-14:
                raise np.linalg.LinAlgError("I + lam*T is singular")
            self._fact[lam] = np.linalg.inv(K)
        return self._fact[lam] @ (np.asarray(x, dtype=np.float64) - lam * self.c)

    def descriptor(self):
        return {"t_kind": np.array(self.kind), "t_matrix": self.A, "t_offset": self.c}


def resolvent(t, lam, x):
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return t.resolvent(lam, x)


def operator_from_descriptor(d):
    kind = str(d.get("t_kind", "zero"))
    if kind == "zero":
        return ZeroOperator()
    if kind == "simplex":
        return SimplexNormalCone(int(d["t_p1"]), int(d["t_p2"]))
    if kind == "affine":
        return AffineCoHypo(d["t_matrix"], d["t_offset"])
    raise ValueError(f"unknown operator kind {kind!r}")


# ---- problem -------------------------------------------------------------

def bfs_cocoercivity(l_g, nu, lam):
    if not l_g * nu < 1:
        raise ValueError(f"need L_g * nu < 1, got {l_g * nu}")
    hi = 2 * (1 + math.sqrt(1 - l_g * nu)) / l_g
    if not (nu < lam < hi):
        raise ValueError(f"lambda = {lam} outside ({nu}, {hi})")
    return 4 * (1 - l_g * nu) / (lam * (4 - l_g * lam) - 4 * nu)


def lambda_upper(l_g, nu):
    return 2 * (1 + math.sqrt(1 - l_g * nu)) / l_g


def default_lambda(l_g, nu=0.0):
    lam = max(2 * nu, 1.0 / l_g)
    return min(lam, 0.99 * lambda_upper(l_g, nu))


@dataclass
class InclusionProblem:
    g: object  # FiniteSumProblem
    t: object
    lam: float
    l_g: float

    def __post_init__(self):
        nu = self.t.nu
        if not 2 * nu <= self.lam:
            raise ValueError(f"need lambda >= 2 nu, got lambda={self.lam}, nu={nu}")
        self.L = bfs_cocoercivity(self.l_g, nu, self.lam)

    @property
    def nu(self):
        return self.t.nu

    def J(self, x):
        return self.t.resolvent(self.lam, x)


def make_inclusion(problem, t, lam=None, l_g=None):
    """L_g defaults to the averaged constant of the finite sum."""
    if l_g is None:
        l_g = problem.L if problem.certificate is not None else certify_cocoercivity(problem).L
    if lam is None:
        lam = default_lambda(l_g, t.nu)
    return InclusionProblem(problem, t, lam, l_g)


def bfs_eval(ip, i, x):
    u = ip.J(x)
    return eval_component(ip.g, i, u) + (x - u) / ip.lam


def bfs_full(ip, x):
    u = ip.J(x)
    return eval_full(ip.g, u) + (x - u) / ip.lam


def bfs_components(ip, x):
    """All rows G_{i,lam} x with one shared resolvent evaluation."""
    u = ip.J(x)
    return ip.g.mats @ u + ip.g.offsets + (x - u) / ip.lam


def fbs_residual(ip, u):
    u = np.asarray(u, dtype=np.float64)
    return (u - ip.J(u - ip.lam * eval_full(ip.g, u))) / ip.lam


def run_inclusion(ip, estimator, schedule, max_iters=None, max_epochs=None, target=None,
                  rng=None, x0=None, method=None, seed=None):
    """VFKM on the BFS equation; trace residual is ||G_lam x^k||.

    trace.x_final holds x^k; the solution estimate is J(x^k) (see `solution`).
    """
    if rng is None and seed is not None:
        rng = seed
    return iterate(ip.g, estimator, schedule, x0=x0, rng=rng, max_iters=max_iters,
                   max_epochs=max_epochs, target=target, resolvent=ip.J, lam=ip.lam,
                   method=method or f"vfkm4ni-{estimator.kind}", seed=seed)


def solution(ip, trace):
    return ip.J(trace.x_final)
