"""Experiment orchestration and the `vfkm` command line.

    vfkm generate --preset desk --out runs/desk
    vfkm run      --preset desk --out runs/desk --threads 4
    vfkm compare  runs/desk
    vfkm verify   --level fast

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .baselines import run_det_fkm, run_og, run_plain_vr_forward
from .estimators import make_estimator
from .inclusion import (SimplexNormalCone, ZeroOperator, make_inclusion,
                        operator_from_descriptor, run_inclusion)
from .operators import MinimaxSpec, generate_minimax, load_problem, save_problem
from .solver import DivergenceError, Sublinear, run

THRESHOLDS = (1e-2, 1e-4, 1e-8)


class ConfigError(ValueError):
    pass


# ---- seeds ---------------------------------------------------------------

def _derive(master, *key):
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    hi, lo = ss.generate_state(2, np.uint32)
    return (int(hi) << 32) | int(lo)


def instance_seed(master, i):
    return _derive(master, 0, i)


def run_seed(master, i, j):
    # shared by every method so comparisons use common random numbers
    return _derive(master, 1, i, j)


# ---- configuration -------------------------------------------------------

DEFAULT_METHODS = [
    {"name": "vfkm-saga", "kind": "saga", "beta_L": 0.25, "r": 20},
    {"name": "vfkm-svrg", "kind": "svrg", "beta_L": 0.15, "r": 20},
    {"name": "detfkm", "kind": "detfkm", "beta_L": 0.5, "r": 20},
    {"name": "og", "kind": "og", "eta_L": 0.5},
    {"name": "vrforward-saga", "kind": "vrforward", "estimator": "saga", "eta_L": 0.25},
]

PRESETS = {
    "desk": {"p1": 13, "p2": 7, "n": 500, "instances": 10},
    "exp1": {"p1": 67, "p2": 33, "n": 5000, "instances": 10},
    "exp2": {"p1": 133, "p2": 67, "n": 10000, "instances": 10},
}

METHOD_KINDS = ("saga", "svrg", "detfkm", "og", "vrforward")


@dataclass
class ExperimentConfig:
    p1: int = 13
    p2: int = 7
    n: int = 500
    instances: int = 10
    seed: int = 0
    epochs: float = 100.0
    constrained: bool = False
    seeds: int = 1
    methods: list = field(default_factory=lambda: copy.deepcopy(DEFAULT_METHODS))
    out: str = "runs"

    def validate(self):
        for k in ("p1", "p2", "n", "instances", "seeds"):
            v = getattr(self, k)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{k} must be a positive integer, got {v!r}")
        if not self.epochs > 0:
            raise ConfigError("epochs must be positive")
        if not self.methods:
            raise ConfigError("no methods configured")
        names = set()
        for m in self.methods:
            if not isinstance(m, dict) or "kind" not in m:
                raise ConfigError(f"method entry needs a kind: {m!r}")
            if m["kind"] not in METHOD_KINDS:
                raise ConfigError(f"unknown method kind {m['kind']!r}")
            m.setdefault("name", m["kind"])
            if m["name"] in names:
                raise ConfigError(f"duplicate method name {m['name']!r}")
            names.add(m["name"])
        return self

    @property
    def batch(self):
        return max(1, int(math.floor(0.5 * self.n ** (2 / 3))))

    @property
    def p_switch(self):
        return self.n ** (-1 / 3)


def load_config(path=None, preset=None, overrides=None):
    cfg = ExperimentConfig()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        for k, v in PRESETS[preset].items():
            setattr(cfg, k, v)
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        prob = raw.pop("problem", {}) or {}
        for k, v in list(prob.items()) + list(raw.items()):
            if k == "budget":
                v = (v or {}).get("epochs", cfg.epochs)
                k = "epochs"
            if not hasattr(cfg, k):
                raise ConfigError(f"unknown config key {k!r}")
            setattr(cfg, k, v)
    for k, v in (overrides or {}).items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg.validate()


# ---- instances -----------------------------------------------------------

def instance_path(out, i):
    return Path(out) / "instances" / f"instance_{i:03d}.npz"


def generate_instances(cfg, verbose=True):
    d = Path(cfg.out) / "instances"
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(cfg.instances):
        spec = MinimaxSpec(cfg.p1, cfg.p2, cfg.n, instance_seed(cfg.seed, i))
        P = generate_minimax(spec)
        t = SimplexNormalCone(cfg.p1, cfg.p2) if cfg.constrained else ZeroOperator()
        path = instance_path(cfg.out, i)
        save_problem(path, P, extra=t.descriptor())
        paths.append(path)
        if verbose:
            c = P.certificate
            print(f"instance {i:3d}  L={c.L:.6g}  sigma={c.sigma:.6g}  kappa={c.kappa:.6g}")
    return paths


def load_instances(cfg):
    paths = [instance_path(cfg.out, i) for i in range(cfg.instances)]
    if not all(p.exists() for p in paths):
        generate_instances(cfg, verbose=False)
    out = []
    for p in paths:
        P, extra = load_problem(p)
        out.append((P, operator_from_descriptor(extra)))
    return out


# ---- runs ----------------------------------------------------------------

def run_method(P, t, m, cfg, seed, constrained):
    """One (method, instance, seed) cell; returns a SolverTrace."""
    kind = m["kind"]
    b = int(m.get("b") or cfg.batch)
    ps = float(m.get("p") or cfg.p_switch)
    r = float(m.get("r", 20))
    if constrained:
        ip = make_inclusion(P, t, lam=m.get("lam_L", 1.0) / P.L)
        L = ip.L
    else:
        L = P.L
    if kind in ("saga", "svrg", "detfkm"):
        beta = float(m["beta"]) if "beta" in m else float(m.get("beta_L", 0.25)) / L
        est = make_estimator("full" if kind == "detfkm" else kind, b, ps)
        if constrained:
            tr = run_inclusion(ip, est, Sublinear(r, beta), max_epochs=cfg.epochs, seed=seed)
        elif kind == "detfkm":
            tr = run_det_fkm(P, r, beta, max_epochs=cfg.epochs)
        else:
            tr = run(P, est, Sublinear(r, beta), max_epochs=cfg.epochs, seed=seed)
    elif kind == "og":
        if constrained:
            raise ConfigError("og is only configured for unconstrained runs")
        tr = run_og(P, float(m.get("eta_L", 0.5)) / L, max_epochs=cfg.epochs)
    elif kind == "vrforward":
        if constrained:
            raise ConfigError("vrforward is only configured for unconstrained runs")
        est = make_estimator(m.get("estimator", "saga"), b, ps)
        tr = run_plain_vr_forward(P, est, float(m.get("eta_L", 0.25)) / L,
                                  max_epochs=cfg.epochs, seed=seed)
    else:
        raise ConfigError(f"unknown method kind {kind!r}")
    tr.method = m["name"]
    tr.seed = seed
    return tr


def _deterministic(m):
    return m["kind"] in ("detfkm", "og")


def _cell(args):
    i, j, m, cfg, P, t = args
    seed = run_seed(cfg.seed, i, j)
    try:
        tr = run_method(P, t, m, cfg, seed, cfg.constrained)
        return (m["name"], i, j, tr, None)
    except DivergenceError as e:
        return (m["name"], i, j, e.trace, str(e))


def epoch_grid_values(epochs, rel, grid):
    """Relative residual of the latest iterate affordable at each grid epoch
    (1.0 before the first recorded iterate)."""
    epochs = np.asarray(epochs, dtype=np.float64)
    rel = np.asarray(rel, dtype=np.float64)
    idx = np.searchsorted(epochs, grid, side="right") - 1
    return np.where(idx >= 0, rel[np.maximum(idx, 0)], 1.0)


def aggregate(traces, epochs):
    """Mean and standard error of the relative residual per integer epoch."""
    grid = np.arange(0, int(math.floor(epochs)) + 1)
    by_method = {}
    for name, tr in traces:
        by_method.setdefault(name, []).append(
            epoch_grid_values(tr.epoch, tr.relative(), grid))
    rows = []
    for name in by_method:
        V = np.array(by_method[name])
        mean = V.mean(axis=0)
        se = V.std(axis=0, ddof=1) / math.sqrt(len(V)) if len(V) > 1 else np.zeros_like(mean)
        for e, mu, s in zip(grid, mean, se):
            rows.append((name, int(e), float(mu), float(s), len(V)))
    return rows


def write_aggregate(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "epoch", "mean_rel_residual", "stderr", "runs"])
        for name, e, mu, s, c in rows:
            w.writerow([name, e, repr(mu), repr(s), c])


def read_aggregate(path):
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["method"], []).append(
                (int(row["epoch"]), float(row["mean_rel_residual"])))
    return out


def epochs_to(curve, thr):
    for e, v in curve:
        if v <= thr:
            return e
    return None


def comparison_table(agg, thresholds=THRESHOLDS):
    rows = []
    for name, curve in agg.items():
        rows.append([name] + [epochs_to(curve, t) for t in thresholds])
    return rows


def format_table(rows, thresholds=THRESHOLDS):
    head = ["method"] + [f"epochs to {t:g}" for t in thresholds]
    cells = [[str(c) if c is not None else "not reached" for c in r] for r in rows]
    widths = [max(len(h), *(len(r[j]) for r in cells)) for j, h in enumerate(head)]
    fmt = "  ".join("{:<%d}" % w for w in widths)
    return "\n".join([fmt.format(*head)] + [fmt.format(*r) for r in cells])


def run_experiment(cfg, threads=1, verbose=True):
    out = Path(cfg.out)
    tdir = out / "traces"
    tdir.mkdir(parents=True, exist_ok=True)
    insts = load_instances(cfg)
    jobs = []
    for m in cfg.methods:
        seeds = 1 if _deterministic(m) else cfg.seeds
        for i, (P, t) in enumerate(insts):
            for j in range(seeds):
                jobs.append((i, j, m, cfg, P, t))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_cell, jobs))
    else:
        results = [_cell(a) for a in jobs]
    traces, failures = [], []
    for name, i, j, tr, err in results:
        if err is not None:
            failures.append({"method": name, "instance": i, "seed_index": j, "error": err})
            if verbose:
                print(f"cell {name} i={i} j={j} failed: {err}", file=sys.stderr)
            continue
        tr.to_csv(tdir / f"{name}__i{i:03d}__s{j:02d}.csv")
        traces.append((name, tr))
    rows = aggregate(traces, cfg.epochs)
    write_aggregate(out / "aggregate.csv", rows)
    agg = read_aggregate(out / "aggregate.csv")
    table = comparison_table(agg)
    summary = {
        "config": {k: getattr(cfg, k) for k in ("p1", "p2", "n", "instances", "seed",
                                               "epochs", "constrained", "seeds")},
        "methods": cfg.methods,
        "failures": failures,
        "epochs_to": {r[0]: dict(zip([f"{t:g}" for t in THRESHOLDS], r[1:])) for r in table},
        "final_mean_rel_residual": {k: v[-1][1] for k, v in agg.items()},
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    if verbose:
        print(format_table(table))
    return summary


# ---- CLI -----------------------------------------------------------------

def _common(sp):
    sp.add_argument("--config", help="YAML experiment config")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--seed", type=int, help="master seed")
    sp.add_argument("--preset", choices=sorted(PRESETS))


def build_parser():
    ap = argparse.ArgumentParser(prog="vfkm", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    g = sub.add_parser("generate", help="generate and certify problem instances")
    _common(g)
    r = sub.add_parser("run", help="run every (method, instance, seed) cell")
    _common(r)
    r.add_argument("--epochs", type=float)
    r.add_argument("--seeds", type=int)
    r.add_argument("--constrained", action="store_true", default=None)
    v = sub.add_parser("verify", help="run the verification suites")
    _common(v)
    v.add_argument("--level", choices=("fast", "full"), default="fast")
    c = sub.add_parser("compare", help="epochs-to-threshold table from run directories")
    c.add_argument("dirs", nargs="+")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.cmd == "compare":
            for d in args.dirs:
                path = Path(d) / "aggregate.csv"
                if not path.exists():
                    raise ConfigError(f"{path} not found")
                rows = comparison_table(read_aggregate(path))
                if len(args.dirs) > 1:
                    rows = [[f"{d}:{r[0]}"] + r[1:] for r in rows]
                print(format_table(rows))
            return 0
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        over = {"out": args.out, "seed": args.seed}
        if args.cmd == "run":
            over.update(epochs=args.epochs, seeds=args.seeds, constrained=args.constrained)
        cfg = load_config(args.config, args.preset, over)
        if args.cmd == "generate":
            generate_instances(cfg)
            return 0
        if args.cmd == "run":
            run_experiment(cfg, threads=args.threads)
            return 0
        if args.cmd == "verify":
            from .verification import format_report, run_suite, write_report
            results, elapsed = run_suite(args.level, cfg.seed)
            print(format_report(results))
            print(f"elapsed {elapsed:.1f}s")
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                write_report(Path(args.out) / "report.json", results, elapsed)
            return 1 if any(r.status == "fail" for r in results) else 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
