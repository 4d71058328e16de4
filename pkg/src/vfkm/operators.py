"""Finite-sum affine operators, synthetic minimax instances and certification.

A problem holds n affine maps G_i x = A_i x + a_i stored densely as an
(n, p, p) array plus an (n, p) array of offsets. All solvers in the package
take their step sizes from the constant L of the averaged co-coercivity
condition

    <Gx - Gy, x - y> >= (1/L) * (1/n) sum_i ||G_i x - G_i y||^2,

which `certify_cocoercivity` computes exactly via a generalized eigenproblem.
"""
from __future__ import annotations

import io
import zipfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla


class NotCocoerciveError(ValueError):
    """Raised when no finite co-coercivity constant exists."""


class SingularSystemError(ValueError):
    def __init__(self, msg, cond=np.inf):
        super().__init__(msg)
        self.cond = cond


class GenerationError(RuntimeError):
    pass


class OracleCounter:
    """Counts component evaluations G_i x requested by an algorithm."""

    def __init__(self):
        self.count = 0

    def add(self, k):
        self.count += int(k)

    def __repr__(self):
        return f"OracleCounter({self.count})"


@dataclass
class CocoercivityCertificate:
    L: float
    sigma: float
    method: str = "exact-eigen"
    residual: float = 0.0

    @property
    def kappa(self):
        return self.L / self.sigma if self.sigma > 0 else np.inf


@dataclass
class FiniteSumProblem:
    mats: np.ndarray  # (n, p, p)
    offsets: np.ndarray  # (n, p)
    seed: Optional[int] = None
    certificate: Optional[CocoercivityCertificate] = None
    mean_matrix: np.ndarray = field(init=False, repr=False)
    mean_offset: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mats = np.ascontiguousarray(self.mats, dtype=np.float64)
        offsets = np.ascontiguousarray(self.offsets, dtype=np.float64)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValueError(f"mats must have shape (n, p, p), got {mats.shape}")
        if offsets.shape != mats.shape[:2]:
            raise ValueError(
                f"offsets shape {offsets.shape} does not match mats {mats.shape}")
        if mats.shape[0] < 1:
            raise ValueError("need at least one component")
        self.mats = mats
        self.offsets = offsets
        self.mean_matrix = mats.mean(axis=0)
        self.mean_offset = offsets.mean(axis=0)

    @property
    def n(self):
        return self.mats.shape[0]

    @property
    def p(self):
        return self.mats.shape[1]

    @property
    def L(self):
        if self.certificate is None:
            self.certificate = certify_cocoercivity(self)
        return self.certificate.L

    @property
    def sigma(self):
        if self.certificate is None:
            self.certificate = certify_cocoercivity(self)
        return self.certificate.sigma

    def _check_x(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.p:
            raise ValueError(f"dimension mismatch: expected {self.p}, got {x.shape[0]}")
        return x


def eval_component(problem, i, x, counter=None):
    """G_i x for a single index."""
    if not 0 <= i < problem.n:
        raise IndexError(f"component index {i} out of range [0, {problem.n})")
    x = problem._check_x(x)
    if counter is not None:
        counter.add(1)
    return problem.mats[i] @ x + problem.offsets[i]


def eval_batch(problem, idx, X, counter=None):
    """Evaluate G_i at several points for each i in idx.

    X has shape (p, m); the result has shape (len(idx), p, m). Costs
    len(idx) * m evaluations.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != problem.p:
        raise ValueError(f"dimension mismatch: expected {problem.p}, got {X.shape[0]}")
    if counter is not None:
        counter.add(len(idx) * X.shape[1])
    return problem.mats[idx] @ X + problem.offsets[idx][:, :, None]


def eval_all(problem, x):
    """Rows G_i x for every i (diagnostic, never counted)."""
    x = problem._check_x(x)
    return problem.mats @ x + problem.offsets


def eval_full(problem, x, counter=None):
    """Gx = mean_i G_i x from cached aggregates; costs n when counted."""
    x = problem._check_x(x)
    if counter is not None:
        counter.add(problem.n)
    return problem.mean_matrix @ x + problem.mean_offset


def second_moment(mats):
    """M = (1/n) sum_i A_i^T A_i."""
    n = mats.shape[0]
    return np.einsum("nij,nik->jk", mats, mats) / n


def certify_cocoercivity(problem, tol=1e-10):
    """Smallest L with d^T sym(G) d >= (1/L) d^T M d for all d.

    Computed on the range of sym(G). Directions in its null space must be
    annihilated by every component, otherwise L is infinite.
    """
    mats = problem.mats if isinstance(problem, FiniteSumProblem) else np.asarray(problem)
    G = mats.mean(axis=0)
    S = 0.5 * (G + G.T)
    M = second_moment(mats)
    s, V = np.linalg.eigh(S)
    scale = max(np.abs(s).max(), np.abs(M).max(), 1.0)
    if s[0] < -tol * scale:
        raise NotCocoerciveError(
            f"symmetric part is not positive semidefinite (min eig {s[0]:.3e})")
    keep = s > tol * scale
    if not keep.any():
        raise NotCocoerciveError("symmetric part vanishes; operator is not co-coercive")
    V0 = V[:, ~keep]
    leak = float(np.linalg.norm(M @ V0)) if V0.size else 0.0
    if leak > np.sqrt(tol) * scale:
        raise NotCocoerciveError(
            f"null space of sym(G) is not annihilated by the components (|M V0| = {leak:.3e})")
    Vr = V[:, keep]
    Mr = Vr.T @ M @ Vr
    Sr = np.diag(s[keep])
    L = float(sla.eigh(Mr, Sr, eigvals_only=True)[-1])
    if not np.isfinite(L) or L <= 0:
        raise NotCocoerciveError(f"certification produced invalid L = {L}")
    sigma = float(s[0]) if keep.all() else 0.0
    return CocoercivityCertificate(L=L, sigma=max(sigma, 0.0), method="exact-eigen",
                                   residual=leak)


def component_cocoercivity(problem, tol=1e-10):
    """max_i of the single-component constants (each G_i co-coercive)."""
    Ls = [certify_cocoercivity(problem.mats[i:i + 1], tol).L for i in range(problem.n)]
    return max(Ls)


@dataclass
class MinimaxSpec:
    p1: int
    p2: int
    n: int
    seed: int = 0

    @property
    def p(self):
        return self.p1 + self.p2


def _random_psd(rng, m, floor):
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    d = np.maximum(rng.standard_normal(m), 0.0) + floor
    A = (Q * d) @ Q.T
    return 0.5 * (A + A.T)


def generate_minimax(spec, rng=None, eig_floor=0.0, max_offset_retries=10,
                     max_redraws=100, solve_tol=1e-8):
    """Bilinear-coupled convex-concave instance.

    G_i = [[A_i, L_i], [-L_i^T, B_i]] with A_i, B_i = Q D Q^T, D clipped
    standard normal. eig_floor > 0 shifts D upward which makes every
    component individually co-coercive (used in tests of per-component
    properties); the default 0 keeps the plain clipping.
    """
    if spec.p1 < 1 or spec.p2 < 1 or spec.n < 1:
        raise ValueError(f"invalid spec {spec}")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    p1, p2, n = spec.p1, spec.p2, spec.n
    p = p1 + p2
    for _ in range(max_redraws):
        mats = np.empty((n, p, p))
        for i in range(n):
            A = _random_psd(rng, p1, eig_floor)
            B = _random_psd(rng, p2, eig_floor)
            C = rng.standard_normal((p1, p2))
            mats[i, :p1, :p1] = A
            mats[i, :p1, p1:] = C
            mats[i, p1:, :p1] = -C.T
            mats[i, p1:, p1:] = B
        try:
            cert = certify_cocoercivity(mats)
        except NotCocoerciveError:
            continue
        G = mats.mean(axis=0)
        for _ in range(max_offset_retries):
            offsets = rng.standard_normal((n, p))
            g = offsets.mean(axis=0)
            try:
                xs = np.linalg.solve(G, -g)
            except np.linalg.LinAlgError:
                continue
            rel = np.linalg.norm(G @ xs + g) / max(np.linalg.norm(g), 1e-300)
            if np.isfinite(rel) and rel <= solve_tol:
                return FiniteSumProblem(mats, offsets, seed=spec.seed, certificate=cert)
    raise GenerationError(f"could not generate an admissible instance for {spec}")


def reference_solution(problem, cond_max=1e13):
    """Dense solve of G x = -g."""
    G, g = problem.mean_matrix, problem.mean_offset
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > cond_max:
        raise SingularSystemError(f"mean matrix is singular (cond = {cond:.3e})", cond)
    xs = np.linalg.solve(G, -g)
    res = np.linalg.norm(G @ xs + g)
    if res > 1e-10 * (1 + np.linalg.norm(g)):
        raise SingularSystemError(f"solve residual too large ({res:.3e})", cond)
    return xs


# ---- serialization -------------------------------------------------------

def save_problem(path, problem, extra=None):
    """Write a problem (and optional extra arrays) to an .npz file."""
    cert = problem.certificate or certify_cocoercivity(problem)
    payload = dict(
        format=np.array("vfkm-problem-v1"),
        n=np.array(problem.n), p=np.array(problem.p),
        mats=problem.mats, offsets=problem.offsets,
        has_seed=np.array(problem.seed is not None),
        seed=np.array(0 if problem.seed is None else problem.seed, dtype=np.uint64),
        L=np.array(cert.L), sigma=np.array(cert.sigma),
    )
    for k, v in (extra or {}).items():
        payload["extra_" + k] = np.asarray(v)
    _write_npz(path, payload)


def _write_npz(path, arrays):
    # np.savez stamps entries with the current time; a fixed stamp keeps
    # repeated writes byte-identical
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]), allow_pickle=False)
            zf.writestr(info, buf.getvalue())


def load_problem(path, validate=True):
    """Inverse of save_problem; returns (problem, extra)."""
    with np.load(path, allow_pickle=False) as z:
        if "format" not in z or str(z["format"]) != "vfkm-problem-v1":
            raise ValueError(f"{path}: not a problem file")
        mats, offsets = z["mats"], z["offsets"]
        n, p = int(z["n"]), int(z["p"])
        seed = int(z["seed"]) if bool(z["has_seed"]) else None
        cert = CocoercivityCertificate(float(z["L"]), float(z["sigma"]))
        extra = {k[6:]: z[k] for k in z.files if k.startswith("extra_")}
    if mats.shape != (n, p, p) or offsets.shape != (n, p):
        raise ValueError(f"{path}: stored shapes disagree with header")
    problem = FiniteSumProblem(mats, offsets, seed=seed, certificate=cert)
    if validate:
        if not (np.all(np.isfinite(mats)) and np.all(np.isfinite(offsets))):
            raise ValueError(f"{path}: non-finite data")
        fresh = certify_cocoercivity(problem)
        if not np.isclose(fresh.L, cert.L, rtol=1e-8):
            raise ValueError(f"{path}: stored L {cert.L} != recomputed {fresh.L}")
    return problem, extra
