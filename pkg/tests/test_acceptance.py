"""Acceptance criteria, one test each; every test prints a single
CRITERION line with its verdict and the observed numbers."""
import time

import numpy as np
import pytest

from vfkm.baselines import run_det_fkm
from vfkm.estimators import LooplessSvrg, Saga
from vfkm.harness import (DEFAULT_METHODS, instance_seed, load_config, run_experiment, run_method,
                          run_seed)
from vfkm.inclusion import (AffineCoHypo, SimplexNormalCone, ZeroOperator, make_inclusion,
                            run_inclusion)
from vfkm.operators import MinimaxSpec, component_cocoercivity, generate_minimax
from vfkm.solver import Sublinear, run
from vfkm import verification as V

N, B = 500, 31
PS = N ** (-1 / 3)


def say(capsys, n, ok, msg):
    with capsys.disabled():
        verdict = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
        print(f"\nCRITERION {n}: {verdict} {msg}")


@pytest.fixture(scope="module")
def desk():
    return V.desk_instances(10, 0, n=N)


def test_criterion_01_estimator_laws(capsys):
    t0 = time.perf_counter()
    res = []
    for b in (1, 3, 10):
        for ps in (0.1, 0.5):
            res += V.check_definition1("svrg", 10, b, ps, trials=40, seed=0)
        res += V.check_definition1("saga", 10, b, trials=40, seed=0)
    el = time.perf_counter() - t0
    worst = max(r.observed for r in res)
    ok = all(r.passed for r in res) and el < 30
    say(capsys, 1, ok, f"{len(res)} lines, worst violation {worst:.2e} (tol 1e-10), {el:.1f}s")
    assert ok, [r for r in res if not r.passed]


def test_criterion_02_constant_formulas(capsys):
    t0 = time.perf_counter()
    res = V.check_constants("svrg")
    for n in (10, 100, N, 5000):
        res += V.check_constants("saga", n)
    el = time.perf_counter() - t0
    c2 = max(r.observed for r in res if r.check_id.startswith("const.C2.svrg"))
    c3 = max(r.observed for r in res if r.check_id.startswith("const.C3.svrg"))
    s2 = max(r.observed for r in res if r.check_id.startswith("const.C2.saga"))
    s3 = max(r.observed for r in res if r.check_id.startswith("const.C3.saga"))
    ok = all(r.passed for r in res) and el < 5
    say(capsys, 2, ok, f"SVRG C2<={c2:.0f} C3<={c3:.0f}; SAGA C2<={s2:.0f} C3<={s3:.0f}; "
        f"SAGA upper beta end checked for b <= 4n^(2/3) (see xfail below), {el:.2f}s")
    assert ok, [r for r in res if not r.passed]


@pytest.mark.xfail(strict=True, reason="beta <= 1/(4L) needs b^3 <= 64 n^2, false for "
                                       "4 n^(2/3) < b <= min(n, 16 n^(2/3)) when n > 64")
def test_criterion_02_literal_saga_upper_end():
    n, L = N, 1.0
    for b in V.saga_grid(n, 100):
        assert b ** 3 / (2 * L * (b ** 3 + 64 * n ** 2)) <= 1 / (4 * L)


def test_criterion_03_sublinear_bound(desk, capsys):
    t0 = time.perf_counter()
    res, proxies = [], []
    for i, P in enumerate(desk):
        for kind in ("svrg", "saga"):
            res.append(V.check_sublinear_bound(P, kind, seeds=20, iters=2000, b=B, tag=f".i{i}"))
    el = time.perf_counter() - t0
    worst = max(r.observed for r in res)
    P = desk[0]
    for kind in ("svrg", "saga"):
        R, _ = V.seeded_runs(P, kind, Sublinear(3, V.plan_step_size(
            kind, N, B, PS if kind == "svrg" else None, P.L).beta), 20, 2000, B,
            PS if kind == "svrg" else None)
        proxies.append(f"{kind} k^2|Gx|^2 tail ratio {V.small_o_proxy(R.mean(axis=0))['ratio']:.3f}")
    ok = all(r.passed for r in res) and el < 600
    say(capsys, 3, ok, f"max mean/bound {worst:.3e} over 20 runs, {el:.0f}s "
        f"(reported only: {'; '.join(proxies)})")
    assert ok, [r for r in res if not r.passed]


def _slope_runs(P, kind, seeds):
    cfg = load_config(preset="desk")
    m = next(dict(x) for x in DEFAULT_METHODS if x["kind"] == kind)
    beta, r = m["beta_L"] / P.L, m["r"]
    R = []
    for s in range(seeds):
        if kind == "detfkm":
            tr = run_det_fkm(P, r, beta, max_iters=2000)
        else:
            est = Saga(cfg.batch) if kind == "saga" else LooplessSvrg(cfg.batch, cfg.p_switch)
            tr = run(P, est, Sublinear(r, beta), max_iters=2000, seed=s)
        R.append(np.square(tr.residual))
    return V.loglog_slope(np.mean(R, axis=0))


def test_criterion_04_rate_order(desk, capsys):
    slopes = {k: [_slope_runs(P, k, 1 if k == "detfkm" else 10) for P in desk]
              for k in ("svrg", "saga", "detfkm")}
    counts = {k: sum(s <= -1.8 for s in v) for k, v in slopes.items()}
    ok = all(c >= 8 for c in counts.values())
    P = desk[0]
    cor = {}
    for kind in ("svrg", "saga"):
        ps = PS if kind == "svrg" else None
        beta = V.plan_step_size(kind, N, B, ps, P.L).beta
        R, _ = V.seeded_runs(P, kind, Sublinear(3, beta), 5, 2000, B, ps)
        cor[kind] = V.loglog_slope(R.mean(axis=0))
    desc = ", ".join(f"{k} {counts[k]}/10 (max slope {max(v):.2f})" for k, v in slopes.items())
    say(capsys, 4, ok, f"slopes <= -1.8 with experiment step sizes: {desc}; "
        f"theory-beta slopes on instance 0 (pre-asymptotic, reported only): "
        f"svrg {cor['svrg']:.2f}, saga {cor['saga']:.2f}")
    assert ok, slopes


def test_criterion_05_linear_rate(desk, capsys):
    t0 = time.perf_counter()
    res = []
    for i, P in enumerate(desk):
        assert P.sigma > 0
        for kind in ("svrg", "saga"):
            res.append(V.check_linear_rate_bound(P, kind, seeds=20, iters=3000, b=B, tag=f".i{i}"))
    el = time.perf_counter() - t0
    worst = max(r.observed for r in res)
    ok = all(r.passed for r in res) and el < 600
    say(capsys, 5, ok, f"max mean/bound {worst:.3e} over 20 runs, {el:.0f}s")
    assert ok, [r for r in res if not r.passed]


def test_criterion_06_lyapunov(desk, capsys):
    res = [V.check_lyapunov_fullbatch(P, steps=500, tag=f".i{i}") for i, P in enumerate(desk)]
    small = generate_minimax(MinimaxSpec(3, 2, 4, 0))
    res.append(V.check_lyapunov_saga_exact(small, steps=200, seed=0, b=1))
    ok = all(r.passed for r in res)
    rel = min(r.observed / r.tolerance * 1e-9 for r in res[:-1])
    say(capsys, 6, ok, f"fullbatch min (E_(k-1) - E_k)/E_0 {rel:.2e} (must be >= -1e-9); "
        f"SAGA n=4 b=1 worst slack {-res[-1].observed:.2e} (tol {res[-1].tolerance:.1e})")
    assert ok, [r for r in res if not r.passed]


def test_criterion_07_bfs_properties(desk, capsys):
    res = []
    # per-component form needs each G_i co-coercive: instances with floored spectra
    Pf = generate_minimax(MinimaxSpec(13, 7, N, instance_seed(0, 0)), eig_floor=0.1)
    lg = component_cocoercivity(Pf)
    for t in (ZeroOperator(), SimplexNormalCone(13, 7)):
        res += V.check_bfs(make_inclusion(Pf, t, l_g=lg), pairs=1000, seed=0)
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.standard_normal((20, 20)))
    ev = np.concatenate([[-4 * lg], rng.uniform(0.5, 2.0, 19)])
    A, c = (Q * ev) @ Q.T, rng.standard_normal(20)
    t = AffineCoHypo(A, c)
    ip = make_inclusion(Pf, t, l_g=lg)
    u = np.linalg.solve(Pf.mean_matrix + A, -(Pf.mean_offset + c))
    res += V.check_bfs(ip, pairs=1000, seed=1, x_hint=u + ip.lam * (A @ u + c), tag=".nu>0")
    # averaged form on the actual desk instances
    for i, P in enumerate(desk):
        res += V.check_bfs(make_inclusion(P, SimplexNormalCone(13, 7)), pairs=1000, seed=i,
                           per_component=False, tag=f".i{i}")
    ok = all(r.passed for r in res)
    say(capsys, 7, ok, f"{len(res)} sampled checks (1000 pairs each), nu={t.nu:.3g}, "
        f"worst violation {max(r.observed for r in res):.2e}")
    assert ok, [r for r in res if not r.passed]


def test_criterion_08_figure1_ordering(tmp_path, capsys):
    cfg = load_config(preset="desk", overrides={"out": str(tmp_path), "seeds": 2})
    s = run_experiment(cfg, verbose=False)
    assert s["failures"] == []
    e = {k: v["0.0001"] for k, v in s["epochs_to"].items()}
    f = s["final_mean_rel_residual"]
    inf = float("inf")
    reached = [k for k in ("vfkm-saga", "vfkm-svrg", "detfkm") if e[k] is not None]
    order = (e["vfkm-saga"] or inf) <= (e["vfkm-svrg"] or inf) <= (e["detfkm"] or inf)
    verdict = "INCONCLUSIVE (soft)" if not reached else ("PASS" if order else "FAIL (soft)")
    fin = ", ".join(f"{k} {f[k]:.3g}" for k in sorted(f))
    say(capsys, 8, verdict, f"epochs to 1e-4: {e}; final mean rel. residual at 100 epochs: {fin}")


def test_criterion_09_inclusion(desk, tmp_path, capsys):
    methods = [{"name": "vfkm4ni-saga", "kind": "saga", "beta_L": 0.25, "r": 20},
               {"name": "vfkm4ni-svrg", "kind": "svrg", "beta_L": 0.15, "r": 20}]
    cfg = load_config(preset="desk", overrides={"out": str(tmp_path), "constrained": True,
                                                "methods": methods})
    s = run_experiment(cfg, verbose=False)
    e = s["epochs_to"]["vfkm4ni-saga"]["0.0001"]
    f = s["final_mean_rel_residual"]
    P = desk[0]
    ip = make_inclusion(P, ZeroOperator())
    same = True
    for mk in (lambda: Saga(B), lambda: LooplessSvrg(B, PS)):
        a = run_inclusion(ip, mk(), Sublinear(20, 0.25 / P.L), max_iters=1500, seed=11)
        b = run(P, mk(), Sublinear(20, 0.25 / P.L), max_iters=1500, seed=11)
        same &= a.residual == b.residual and np.array_equal(a.x_final, b.x_final)
    ok = e is not None and e <= 100 and same and not s["failures"]
    say(capsys, 9, ok, f"VFKM4NI-Saga reaches 1e-4 at epoch {e} (final {f['vfkm4ni-saga']:.2e}); "
        f"VFKM4NI-Svrg final {f['vfkm4ni-svrg']:.2e}; T=Zero bit-identical: {same}")
    assert ok


def _files(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_criterion_10_determinism_accounting(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        cfg = load_config(preset="desk", overrides={"out": str(tmp_path / name), "epochs": 30,
                                                    "seeds": 2})
        run_experiment(cfg, verbose=False)
        outs.append(_files(tmp_path / name))
    same = outs[0] == outs[1]
    cfg = load_config(preset="desk")
    m = next(x for x in DEFAULT_METHODS if x["kind"] == "svrg")
    audits = []
    for i in range(10):
        P = generate_minimax(MinimaxSpec(13, 7, N, instance_seed(0, i)))
        tr = run_method(P, ZeroOperator(), m, cfg, run_seed(0, i, 0), False)
        audits.append(V.audit_svrg_oracle(tr, N, cfg.batch))
    ok = same and all(a.passed for a in audits)
    sw = sum(int(a.detail.split("=")[1]) for a in audits)
    say(capsys, 10, ok, f"{len(outs[0])} output files bit-identical: {same}; SVRG audits "
        f"{sum(a.passed for a in audits)}/10 exact ({sw} snapshot switches)")
    assert ok
