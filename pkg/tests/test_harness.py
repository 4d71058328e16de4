import json
import time

import numpy as np
import pytest
import yaml

from vfkm.harness import (ConfigError, aggregate, comparison_table,
                          epoch_grid_values, epochs_to, format_table, generate_instances,
                          instance_path, instance_seed, load_config, load_instances, main,
                          read_aggregate, run_experiment, run_method, run_seed)
from vfkm.operators import load_problem
from vfkm.solver import read_trace_csv
from vfkm.verification import audit_svrg_oracle


def tiny(tmp_path, **kw):
    cfg = dict(p1=3, p2=2, n=40, instances=2, epochs=5.0, out=str(tmp_path))
    cfg.update(kw)
    return load_config(overrides=cfg)


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


# ---- seeds and config ---------------------------------------------------------

def test_seeds_pure_and_distinct():
    assert instance_seed(7, 3) == instance_seed(7, 3)
    seeds = {instance_seed(7, i) for i in range(50)} | {run_seed(7, i, j)
                                                       for i in range(10) for j in range(5)}
    assert len(seeds) == 100
    assert instance_seed(7, 0) != instance_seed(8, 0)
    assert 0 <= run_seed(2 ** 64 - 1, 1, 1) < 2 ** 64


def test_presets():
    c = load_config(preset="exp1")
    assert (c.p1, c.p2, c.n, c.instances) == (67, 33, 5000, 10)
    c = load_config(preset="desk")
    assert (c.p1 + c.p2, c.n, c.batch) == (20, 500, 31)
    assert c.p_switch == pytest.approx(500 ** (-1 / 3))


def test_yaml_config(tmp_path):
    f = write_yaml(tmp_path / "c.yaml", {"problem": {"p1": 4, "p2": 2, "n": 30},
                                         "budget": {"epochs": 7}, "seeds": 3})
    c = load_config(f)
    assert (c.p1, c.p2, c.n, c.epochs, c.seeds) == (4, 2, 30, 7, 3)


@pytest.mark.parametrize("data", [{"problem": {"dims": 3}}, {"n": 0}, {"epochs": -1},
                                  {"methods": [{"kind": "aog"}]},
                                  {"methods": [{"kind": "og"}, {"kind": "og"}]}, [1, 2]])
def test_config_errors(tmp_path, data):
    f = write_yaml(tmp_path / "bad.yaml", data)
    with pytest.raises(ConfigError):
        load_config(f)
    assert main(["generate", "--config", f, "--out", str(tmp_path)]) == 2


def test_cli_config_error_paths(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["generate", "--preset", "desk", "--threads", "0"]) == 2
    assert main(["compare", str(tmp_path)]) == 2
    assert main(["bogus"]) == 2


# ---- generate ---------------------------------------------------------------

def test_generate_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["generate", "--preset", "desk", "--out", str(d), "--seed", "3"]) == 0
    for i in range(10):
        assert instance_path(a, i).read_bytes() == instance_path(b, i).read_bytes()
    P, extra = load_problem(instance_path(a, 0))
    assert (P.n, P.p) == (500, 20) and str(extra["t_kind"]) == "zero"


def test_generate_prints_certificates(tmp_path, capsys):
    generate_instances(tiny(tmp_path))
    out = capsys.readouterr().out
    assert out.count("L=") == 2 and "sigma=" in out and "kappa=" in out


# ---- runs -------------------------------------------------------------------

def _files(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_run_deterministic_and_thread_invariant(tmp_path):
    outs = []
    for name, threads in (("a", 1), ("b", 1), ("c", 2)):
        cfg = tiny(tmp_path / name, seeds=2)
        run_experiment(cfg, threads=threads, verbose=False)
        outs.append(_files(tmp_path / name))
    assert outs[0] == outs[1] == outs[2]
    names = {str(k) for k in outs[0]}
    assert "aggregate.csv" in names and "summary.json" in names
    assert "traces/vfkm-saga__i001__s01.csv" in names
    assert "traces/detfkm__i000__s00.csv" in names and "traces/detfkm__i000__s01.csv" not in names


def test_run_cli_and_compare(tmp_path, capsys):
    f = write_yaml(tmp_path / "c.yaml", {"problem": {"p1": 3, "p2": 2, "n": 40, "instances": 2},
                                         "budget": {"epochs": 4}})
    assert main(["run", "--config", f, "--out", str(tmp_path / "r")]) == 0
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "r")]) == 0
    table = capsys.readouterr().out
    assert "epochs to 1e-08" in table and "not reached" in table
    s = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert s["failures"] == [] and set(s["epochs_to"]) == {
        "vfkm-saga", "vfkm-svrg", "detfkm", "og", "vrforward-saga"}


def test_compare_identical_sets(tmp_path, capsys):
    cfg = tiny(tmp_path / "x")
    run_experiment(cfg, verbose=False)
    (tmp_path / "y").mkdir()
    (tmp_path / "y" / "aggregate.csv").write_bytes((tmp_path / "x" / "aggregate.csv").read_bytes())
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "x"), str(tmp_path / "y")]) == 0
    lines = capsys.readouterr().out.splitlines()
    xs = sorted(l.split(None, 1)[1] for l in lines if l.startswith(str(tmp_path / "x")))
    ys = sorted(l.split(None, 1)[1] for l in lines if l.startswith(str(tmp_path / "y")))
    assert xs == ys and len(xs) == 5


def test_constrained_run_records_bfs(tmp_path):
    cfg = tiny(tmp_path, constrained=True,
               methods=[{"name": "vfkm4ni-saga", "kind": "saga", "beta_L": 0.25, "r": 20}])
    s = run_experiment(cfg, verbose=False)
    assert s["failures"] == []
    d = read_trace_csv(tmp_path / "traces" / "vfkm4ni-saga__i000__s00.csv")
    assert np.array_equal(d["bfs_residual"], d["residual"])
    assert np.all(d["fbs_residual"] <= d["bfs_residual"] + 1e-10)


def test_failed_cells_are_recorded(tmp_path):
    cfg = tiny(tmp_path, epochs=60.0,
               methods=[{"name": "wild", "kind": "detfkm", "beta_L": 50.0, "r": 3},
                                  {"name": "tame", "kind": "detfkm", "beta_L": 0.5, "r": 3}])
    s = run_experiment(cfg, verbose=False)
    assert {f["method"] for f in s["failures"]} == {"wild"}
    assert "tame" in s["final_mean_rel_residual"]


def test_svrg_accounting_audit(tmp_path):
    cfg = tiny(tmp_path)
    P, t = load_instances(cfg)[0]
    m = {"name": "vfkm-svrg", "kind": "svrg", "beta_L": 0.15, "r": 20}
    tr = run_method(P, t, m, cfg, run_seed(0, 0, 0), False)
    r = audit_svrg_oracle(tr, P.n, cfg.batch)
    assert r.passed, r
    assert sum(tr.switches) > 0
    tr.switches[3] = not tr.switches[3]
    assert not audit_svrg_oracle(tr, P.n, cfg.batch).passed


# ---- aggregation ----------------------------------------------------------------

def test_epoch_grid_zero_order_hold():
    v = epoch_grid_values([0.5, 1.0, 2.6], [1.0, 0.5, 0.1], np.arange(4))
    assert list(v) == [1.0, 0.5, 0.5, 0.1]


def test_epochs_to_and_table():
    agg = {"a": [(0, 1.0), (1, 1e-3), (2, 1e-5)], "b": [(0, 1.0), (1, 0.5)]}
    assert epochs_to(agg["a"], 1e-4) == 2 and epochs_to(agg["b"], 1e-2) is None
    rows = comparison_table(agg)
    assert rows == [["a", 1, 2, None], ["b", None, None, None]]
    assert format_table(rows).count("not reached") == 4


def test_aggregate_mean_and_stderr():
    class T:
        def __init__(self, r):
            self.epoch, self.residual = [0.0, 1.0], r

        def relative(self):
            return np.array(self.residual) / self.residual[0]
    rows = aggregate([("m", T([2.0, 1.0])), ("m", T([1.0, 0.25]))], 1)
    assert rows[1][2] == pytest.approx(0.375)
    assert rows[1][3] == pytest.approx(np.std([0.5, 0.25], ddof=1) / np.sqrt(2))


def test_aggregate_file_roundtrip(tmp_path):
    from vfkm.harness import write_aggregate
    rows = [("m", 0, 1.0, 0.0, 2), ("m", 1, 0.1234567890123, 0.01, 2)]
    write_aggregate(tmp_path / "a.csv", rows)
    assert read_aggregate(tmp_path / "a.csv") == {"m": [(0, 1.0), (1, 0.1234567890123)]}


# ---- verify ---------------------------------------------------------------

def test_verify_fast_cli(tmp_path, capsys):
    t0 = time.perf_counter()
    code = main(["verify", "--level", "fast", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    out = capsys.readouterr().out
    assert code == 0, out
    assert elapsed < 60
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["results"] and all("seed" in r and "status" in r for r in rep["results"])
    assert "0 failed" in out
