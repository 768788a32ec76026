"""Batch front-end: JSON config in, CSV/JSON tables plus a manifest out.

Usage::

    catwalk <experiment> --config cfg.json --out DIR [--seed N] [--threads N]
    catwalk run --config cfg.json --out DIR        # experiment named in the config

Exit status is 0 on success, 1 for an invalid config and 2 when a numerical
routine reports a loss of accuracy.
"""

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .branching import rare_severe_limit_check, rare_severe_schedule, z_inf_pgf
from .chain import ModelParams, simulate_trajectory
from .coupling import tv_table
from .cutoff import (
    CutoffFamily,
    cutoff_profile,
    cutoff_time,
    cutoff_thresholds,
    mean_gap,
    poisson_limit_check,
    window,
)
from .errors import NumericalFault
from .extinction import (
    coupled_extinction,
    dn_scale,
    fixed_point_residual,
    pgf_tau_from_n,
    pgf_tau_from_one,
    pgf_tau_linear_solve,
    sample_extinction_times,
)
from .rng import make_rng, run_shards
from .stationary import persistence_time, pi_zero, stationary_pmf

EXPERIMENTS = ("simulate", "stationary", "tv", "cutoff", "extinction", "branching")
REQUIRED = object()
N_SHARDS = 8
MC_PERSISTENCE_LIMIT = 1e6


class ConfigError(ValueError):
    pass


# field -> (kind, default)
SCHEMAS = {
    "simulate": {
        "p": ("prob", REQUIRED),
        "c": ("num", REQUIRED),
        "x0": ("int", 0),
        "steps": ("int", REQUIRED),
    },
    "stationary": {
        "p": ("prob", REQUIRED),
        "c": ("num", REQUIRED),
        "eps_trunc": ("num", 1e-12),
        "series_tol": ("num", 1e-14),
    },
    "tv": {
        "p": ("prob", REQUIRED),
        "c": ("num", REQUIRED),
        "x": ("int", REQUIRED),
        "y": ("int", REQUIRED),
        "times": ("ints", REQUIRED),
        "eps_trunc": ("num", 1e-12),
    },
    "cutoff": {
        "beta": ("num", 0.4),
        "schedule": ("str", "sqrt"),
        "ns": ("ints", [64, 256, 1024, 4096]),
        "epsilon": ("num", 0.1),
        "theta_list": ("nums", [2.0, 5.0]),
        "scaled_grid": ("nums", [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0]),
        "eps_trunc": ("num", 1e-12),
    },
    "extinction": {
        "p": ("prob", REQUIRED),
        "c": ("num", REQUIRED),
        "s_values": ("nums", [0.3, 0.5, 0.8]),
        "n_max": ("int", 10),
        "series_n_max": ("int", 5),
        "linear_K": ("int", 0),
        "series_tol": ("num", 1e-14),
        "mc_ns": ("ints", []),
        "mc_paths": ("int", 0),
        "scaling_ns": ("ints", []),
        "scaling_reps": ("int", 1000),
        "t_cap": ("int", 1000000),
        "kac_paths": ("int", 0),
    },
    "branching": {
        "beta": ("num", 0.5),
        "ms": ("ints", [10, 100, 1000, 10000]),
        "p": ("prob", 0.4),
        "c": ("num", 0.1),
        "s_values": ("nums", [0.0, 0.25, 0.5, 0.75, 1.0]),
        "tol": ("num", 1e-15),
        "eps_trunc": ("num", 1e-12),
    },
}


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _check(kind, key, v):
    ok = {
        "prob": lambda: _is_num(v) and 0 < v < 1,
        "num": lambda: _is_num(v),
        "int": lambda: _is_int(v) and v >= 0,
        "str": lambda: isinstance(v, str),
        "nums": lambda: isinstance(v, list) and all(_is_num(x) for x in v),
        "ints": lambda: isinstance(v, list) and all(_is_int(x) and x >= 0 for x in v),
    }[kind]()
    if not ok:
        raise ConfigError(f"field {key!r}: invalid value {v!r} (expected {kind})")


def resolve_config(raw, experiment=None, seed=None):
    """Validate ``raw`` and fill schema defaults. Returns a new dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    # a manifest can be fed back in as a config
    if "config" in raw and isinstance(raw["config"], dict):
        raw = dict(raw["config"])
    named = raw.pop("experiment", None)
    if experiment is None:
        experiment = named
    elif named is not None and named != experiment:
        raise ConfigError(f"config is for {named!r}, not {experiment!r}")
    if experiment not in SCHEMAS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    cfg_seed = raw.pop("seed", 0)
    if seed is None:
        seed = cfg_seed
    if not _is_int(seed) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    schema = SCHEMAS[experiment]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown fields for {experiment}: {unknown}")
    out = {"experiment": experiment, "seed": seed}
    for key, (kind, default) in schema.items():
        if key in raw:
            _check(kind, key, raw[key])
            out[key] = raw[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required field {key!r}")
        else:
            out[key] = default
    return out


def config_hash(cfg):
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def write_json(path, data):
    with open(path, "w", newline="") as fh:
        fh.write(json.dumps(_jsonable(data), indent=2, sort_keys=True))
        fh.write("\n")


def _params(cfg):
    return ModelParams(float(cfg["p"]), float(cfg["c"]))


def run_simulate(cfg, out, threads):
    params = _params(cfg)
    traj = simulate_trajectory(cfg["x0"], cfg["steps"], params, make_rng(cfg["seed"]), seed=cfg["seed"])
    write_csv(out / "trajectory.csv", ["t", "x"], enumerate(traj.states))
    return ["trajectory.csv"]


def run_stationary(cfg, out, threads):
    params = _params(cfg)
    pi = stationary_pmf(params, cfg["eps_trunc"])
    write_csv(out / "stationary.csv", ["state", "probability"], enumerate(pi.probs))
    pers = persistence_time(params, cfg["series_tol"])
    pi0 = pi_zero(params, cfg["series_tol"])
    summary = {
        "p": params.p,
        "c": params.c,
        "mean": pi.mean(),
        "mean_exact": params.mean(),
        "tail_mass": pi.tail_mass,
        "support_max": pi.support_max,
        "pi0": pi0.value,
        "pi0_error_bound": pi0.error_bound,
        "ln_persistence": pers["log_value"].value,
        "ln_persistence_error_bound": pers["log_value"].error_bound,
        "persistence": pers["value"],
        "bounds": list(pers["log_bounds"]) if pers["bounds_available"] else None,
    }
    write_json(out / "summary.json", summary)
    return ["stationary.csv", "summary.json"]


def run_tv(cfg, out, threads):
    params = _params(cfg)
    x, y = cfg["x"], cfg["y"]
    if not x < y:
        raise ConfigError("tv needs x < y")
    rows = tv_table(x, y, cfg["times"], params, cfg["eps_trunc"])
    write_csv(out / "tv.csv", ["t", "tv_lower", "tv_exact", "tv_exact_err", "tv_upper"], rows)
    return ["tv.csv"]


def run_cutoff(cfg, out, threads):
    try:
        family = CutoffFamily.named(cfg["schedule"], float(cfg["beta"]), float(cfg["epsilon"]))
    except KeyError as exc:
        raise ConfigError(f"unknown schedule {cfg['schedule']!r}") from exc
    ns = sorted(cfg["ns"])
    for n in ns:
        family.terms(n)
    profile = cutoff_profile(family, ns, cfg["scaled_grid"], cfg["eps_trunc"])
    profile.sort(key=lambda r: (r[0], r[1], r[2]))
    write_csv(out / "profile.csv", ["n", "t", "u", "d", "err"], profile)
    limits = [(n, poisson_limit_check(n, family, cfg["eps_trunc"]), mean_gap(n, family)) for n in ns]
    write_csv(out / "limits.csv", ["n", "tv_to_poisson", "mean_gap"], limits)
    thresholds = []
    for n in ns:
        for theta in cfg["theta_list"]:
            try:
                lam, nu, gamma = cutoff_thresholds(n, theta, family)
            except ValueError:
                continue
            thresholds.append((n, theta, cutoff_time(n, family), window(n, family), lam, nu, gamma))
    write_csv(out / "thresholds.csv", ["n", "theta", "t_n", "b_n", "lambda", "nu", "gamma"], thresholds)
    return ["profile.csv", "limits.csv", "thresholds.csv"]


def run_extinction(cfg, out, threads):
    params = _params(cfg)
    if params.c >= 1.0:
        raise ConfigError("extinction needs c < 1")
    seed = cfg["seed"]
    n_max = cfg["n_max"]
    s_values = cfg["s_values"]
    for s in s_values:
        if not 0 < s < 1:
            raise ConfigError("s_values must lie in (0, 1)")
    records = []
    residuals = []
    for s in s_values:
        K = cfg["linear_K"] or None
        lin = pgf_tau_linear_solve(n_max, s, params, K=K)
        a1 = pgf_tau_from_one(s, params, cfg["series_tol"])
        residuals.append({"s": s, "a1": a1.value, "a1_error_bound": a1.error_bound,
                          "residual": fixed_point_residual(s, params, a1.value)})
        for n in range(n_max + 1):
            rec = {"s": s, "n": n, "linear": lin.values[n], "linear_error_bound": lin.error_bound[n]}
            if 1 <= n <= cfg["series_n_max"]:
                ser = pgf_tau_from_n(n, s, params)
                rec["series"] = ser.value
                rec["series_error_bound"] = ser.error_bound
            records.append(rec)
    result = {"p": params.p, "c": params.c, "a_n": records, "fixed_point": residuals}

    mc = []
    for idx, n in enumerate(cfg["mc_ns"]):
        if not cfg["mc_paths"]:
            break
        s_max = max(s_values)
        t_cap = int(math.ceil(math.log(1e-15) / math.log(s_max)))
        parts = run_shards(
            lambda size, rng: sample_extinction_times(n, params, size, rng, t_cap),
            cfg["mc_paths"], [seed, 1, idx], N_SHARDS, threads,
        )
        times = np.concatenate([t for t, _ in parts])
        cens = np.concatenate([c for _, c in parts])
        for s in s_values:
            vals = np.where(cens, 0.0, float(s) ** times.astype(float))
            mc.append({"n": n, "s": s, "mean": float(vals.mean()),
                       "std_error": float(vals.std(ddof=1) / math.sqrt(vals.size))})
    result["monte_carlo"] = mc

    if cfg["kac_paths"]:
        pers = persistence_time(params)
        if pers["value"] < MC_PERSISTENCE_LIMIT:
            parts = run_shards(
                lambda size, rng: sample_extinction_times(0, params, size, rng, cfg["t_cap"]),
                cfg["kac_paths"], [seed, 2], N_SHARDS, threads,
            )
            times = np.concatenate([t for t, _ in parts])
            cens = np.concatenate([c for _, c in parts])
            result["kac"] = {"formula": pers["value"], "mc_mean": float(times.mean()),
                             "mc_std_error": float(times.std(ddof=1) / math.sqrt(times.size)),
                             "censored": int(cens.sum()), "declined": False}
        else:
            result["kac"] = {"formula": pers["value"], "ln_formula": pers["log_value"].value,
                             "declined": True}
    write_json(out / "extinction.json", result)

    levels = (0.1, 0.25, 0.5, 0.75, 0.9)
    header = ["n", "d_n", "reps", "censored"]
    header += [f"xi_q{int(q * 100)}" for q in levels] + [f"tau_q{int(q * 100)}" for q in levels]
    rows = []
    for idx, n in enumerate(cfg["scaling_ns"]):
        if n < 2:
            raise ConfigError("scaling_ns entries must be >= 2")
        parts = run_shards(
            lambda size, rng: coupled_extinction(n, params, size, rng, cfg["t_cap"]),
            cfg["scaling_reps"], [seed, 3, idx], N_SHARDS, threads,
        )
        xi = np.concatenate([p[0] for p in parts])
        tau = np.concatenate([p[1] for p in parts])
        censored = sum(p[2] for p in parts)
        ok = tau >= 0
        dn = dn_scale(n, params)
        row = [n, dn, cfg["scaling_reps"], censored]
        row += list(np.quantile(xi[ok] / dn, levels)) + list(np.quantile(tau[ok] / dn, levels))
        rows.append(row)
    write_csv(out / "scaling.csv", header, rows)
    return ["extinction.json", "scaling.csv"]


def run_branching(cfg, out, threads):
    beta = float(cfg["beta"])
    if beta < 0:
        raise ConfigError("beta must be non-negative")
    rows = rare_severe_limit_check(rare_severe_schedule(beta, cfg["ms"]), beta, cfg["eps_trunc"])
    write_csv(out / "branching.csv", ["m", "tv_to_poisson", "mean_A"], rows)
    params = _params(cfg)
    samples = []
    for s in cfg["s_values"]:
        if not 0 <= s <= 1:
            raise ConfigError("s_values must lie in [0, 1]")
        res = z_inf_pgf(s, params, cfg["tol"])
        samples.append({"s": s, "value": res.value, "error_bound": res.error_bound,
                        "terms_used": res.terms_used})
    write_json(out / "pgf.json", {"p": params.p, "c": params.c, "samples": samples})
    return ["branching.csv", "pgf.json"]


RUNNERS = {
    "simulate": run_simulate,
    "stationary": run_stationary,
    "tv": run_tv,
    "cutoff": run_cutoff,
    "extinction": run_extinction,
    "branching": run_branching,
}


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def execute(cfg, out_dir, threads=1):
    """Run a resolved config, write its outputs and the manifest; return file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files = RUNNERS[cfg["experiment"]](cfg, out, threads)
    wall = time.perf_counter() - start
    manifest = {
        "experiment": cfg["experiment"],
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "seed": cfg["seed"],
        "version": __version__,
        "rng": "numpy Philox, streams keyed by (seed, task index)",
        "wall_time_s": wall,
        "outputs": {name: _sha256(out / name) for name in files},
    }
    write_json(out / "manifest.json", manifest)
    return files


def build_parser():
    parser = argparse.ArgumentParser(prog="catwalk", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run",) + EXPERIMENTS:
        sp = sub.add_parser(name, help="experiment named in the config" if name == "run" else f"{name} experiment")
        sp.add_argument("--config", required=True, help="path to a JSON config (or a manifest.json)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo shards")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    experiment = None if args.command == "run" else args.command
    try:
        raw = json.loads(Path(args.config).read_text())
        cfg = resolve_config(raw, experiment, args.seed)
        if args.threads < 1:
            raise ConfigError("threads must be >= 1")
        execute(cfg, args.out, args.threads)
    except NumericalFault as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
