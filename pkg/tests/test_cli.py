import csv
import json
import math
import subprocess
import sys

import pytest

from catwalk.cli import ConfigError, main, resolve_config

EXPERIMENTS = ["simulate", "stationary", "tv", "cutoff", "extinction", "branching"]


def run(cfg, tmp_path, name, *extra):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    sub = cfg.get("experiment") if cfg.get("experiment") in EXPERIMENTS else "run"
    code = main([sub, "--config", str(path), "--out", str(out), *extra])
    return code, out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_rows(tmp_path, small_configs):
    code, out = run(small_configs["simulate"], tmp_path, "sim")
    assert code == 0
    rows = read_rows(out / "trajectory.csv")
    assert rows[0] == ["t", "x"] and len(rows) == 1002
    assert rows[1] == ["0", "3"]
    xs = [int(x) for _, x in rows[1:]]
    assert all(b == a + 1 or b <= a for a, b in zip(xs, xs[1:]))


def test_stationary_summary(tmp_path, small_configs):
    code, out = run(small_configs["stationary"], tmp_path, "st")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["mean"] - 66.6666666667) < 1e-6
    lo, hi = summary["bounds"]
    assert lo <= summary["ln_persistence"] <= hi
    probs = [float(r[1]) for r in read_rows(out / "stationary.csv")[1:]]
    assert abs(sum(probs) - 1.0) < 1e-11


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_outputs_are_finite_and_listed(tmp_path, small_configs, name):
    code, out = run(small_configs[name], tmp_path, name)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == name
    assert manifest["config"]["experiment"] == name
    for fname in manifest["outputs"]:
        assert (out / fname).exists()
        if fname.endswith(".csv"):
            rows = read_rows(out / fname)
            assert (out / fname).read_bytes().count(b"\r") == 0
            for row in rows[1:]:
                assert all(math.isfinite(float(v)) for v in row)


def test_extinction_outputs(tmp_path, small_configs):
    code, out = run(small_configs["extinction"], tmp_path, "ext")
    assert code == 0
    res = json.loads((out / "extinction.json").read_text())
    for rec in res["a_n"]:
        if "series" in rec:
            assert abs(rec["series"] - rec["linear"]) < 1e-8
    for fp in res["fixed_point"]:
        assert abs(fp["residual"]) < 1e-8
    assert not res["kac"]["declined"]
    assert abs(res["kac"]["mc_mean"] - res["kac"]["formula"]) < 4 * res["kac"]["mc_std_error"]
    assert len(read_rows(out / "scaling.csv")) == 2


def test_kac_declined_for_huge_persistence(tmp_path):
    cfg = {"experiment": "extinction", "p": 0.4, "c": 0.01, "n_max": 2, "series_n_max": 1,
           "s_values": [0.5], "kac_paths": 100}
    code, out = run(cfg, tmp_path, "kac")
    assert code == 0
    kac = json.loads((out / "extinction.json").read_text())["kac"]
    assert kac["declined"] and kac["ln_formula"] > math.log(1e24)


def test_rerun_is_byte_identical(tmp_path, small_configs):
    for name in EXPERIMENTS:
        _, a = run(small_configs[name], tmp_path, name + "_a")
        _, b = run(small_configs[name], tmp_path, name + "_b", "--threads", "3")
        ma = json.loads((a / "manifest.json").read_text())
        mb = json.loads((b / "manifest.json").read_text())
        for fname in ma["outputs"]:
            assert (a / fname).read_bytes() == (b / fname).read_bytes(), (name, fname)
        ma.pop("wall_time_s"), mb.pop("wall_time_s")
        assert ma == mb


def test_manifest_round_trip(tmp_path, small_configs):
    _, a = run(small_configs["simulate"], tmp_path, "orig")
    b = tmp_path / "again"
    assert main(["run", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()


def test_seed_flag_overrides(tmp_path, small_configs):
    _, a = run(small_configs["simulate"], tmp_path, "s1")
    _, b = run(small_configs["simulate"], tmp_path, "s2", "--seed", "12")
    assert (a / "trajectory.csv").read_bytes() != (b / "trajectory.csv").read_bytes()
    assert json.loads((b / "manifest.json").read_text())["seed"] == 12


@pytest.mark.parametrize("cfg", [
    {"experiment": "simulate", "p": 0.4, "c": 0.1},
    {"experiment": "simulate", "p": 1.4, "c": 0.1, "steps": 5},
    {"experiment": "simulate", "p": 0.4, "c": 0.1, "steps": 5, "colour": "red"},
    {"experiment": "tv", "p": 0.4, "c": 0.2, "x": 5, "y": 1, "times": [1]},
    {"experiment": "cutoff", "schedule": "cubic"},
    {"experiment": "nope"},
])
def test_bad_config_exits_one(tmp_path, cfg):
    assert run(cfg, tmp_path, "bad")[0] == 1


def test_mismatched_subcommand_and_missing_file(tmp_path, small_configs):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(small_configs["simulate"]))
    assert main(["tv", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1
    path.write_text("{not json")
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 1


def test_numerical_fault_exits_two(tmp_path):
    cfg = {"experiment": "extinction", "p": 0.4, "c": 0.1, "s_values": [0.5],
           "n_max": 150, "series_n_max": 150}
    assert run(cfg, tmp_path, "fault")[0] == 2


def test_resolve_config_defaults():
    cfg = resolve_config({"p": 0.3, "c": 0.5}, "stationary")
    assert cfg["seed"] == 0 and cfg["eps_trunc"] == 1e-12
    with pytest.raises(ConfigError):
        resolve_config({"p": 0.3, "c": 0.5, "seed": -1}, "stationary")
    with pytest.raises(ConfigError):
        resolve_config([1, 2], "stationary")


def test_module_entry_point(tmp_path, small_configs):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(small_configs["tv"]))
    proc = subprocess.run([sys.executable, "-m", "catwalk", "run", "--config", str(path),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(read_rows(tmp_path / "o" / "tv.csv")) == 6
