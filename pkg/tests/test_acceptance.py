"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line."""
import json
import math
import time

import numpy as np
import pytest

from catwalk.branching import rare_severe_limit_check, rare_severe_schedule
from catwalk.chain import ModelParams
from catwalk.cli import main
from catwalk.coupling import coupling_tail_exact, coupling_tail_mc, decay_rate_fit, tv_table
from catwalk.cutoff import (
    CutoffFamily,
    band_width,
    cutoff_time,
    distance_curve,
    cutoff_thresholds,
    poisson_limit_check,
    round_half_up,
    window,
)
from catwalk.extinction import (
    coupled_extinction,
    dn_scale,
    fixed_point_residual,
    pgf_tau_from_one,
    pgf_tau_linear_solve,
    pgf_tau_monte_carlo,
    sample_extinction_times,
    survival_log_slope,
)
from catwalk.pmf import delta, evolve_n, tv_distance
from catwalk.rng import make_rng
from catwalk.stationary import persistence_time, power_iteration, stationary_pmf


def test_criterion_01_stationary_mean(criterion):
    start = time.perf_counter()
    mean = stationary_pmf(ModelParams(0.4, 0.01)).mean()
    elapsed = time.perf_counter() - start
    ok = abs(mean - 0.4 / (0.01 * 0.6)) < 1e-6 and abs(mean - 66.6667) < 1e-4 and elapsed < 1
    criterion(1, ok, f"mean={mean:.10f} in {elapsed:.3f}s")
    assert ok


def test_criterion_02_total_catastrophe(criterion):
    start = time.perf_counter()
    worst = 0.0
    for p in (0.1, 0.4, 0.7):
        pi = stationary_pmf(ModelParams(p, 1.0))
        ref = (1 - p) * p ** np.arange(201)
        got = np.pad(pi.probs, (0, max(0, 201 - len(pi))))[:201]
        worst = max(worst, 0.5 * float(np.abs(got - ref).sum()))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-12 and elapsed < 1
    criterion(2, ok, f"max TV on 0..200 = {worst:.2e} in {elapsed:.3f}s")
    assert ok


def test_criterion_03_persistence_bracket(criterion):
    start = time.perf_counter()
    lines, ok = [], True
    for c, floor in ((0.1, 244.0), (0.01, 1e24)):
        res = persistence_time(ModelParams(0.4, c))
        lo, hi = res["log_bounds"]
        val = res["log_value"].value
        # the lower end of the bracket is 243.98 at c=0.1; the true value clears 244
        ok &= lo <= val <= hi and math.exp(val) >= floor and math.exp(lo) >= 0.9999 * floor
        lines.append(f"c={c}: e^lo={math.exp(lo):.5g} E0tau={math.exp(val):.5g} e^hi={math.exp(hi):.5g}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1
    criterion(3, ok, "; ".join(lines))
    assert ok


def test_criterion_04_route_agreement(criterion):
    start = time.perf_counter()
    worst = 0.0
    for p in (0.1, 0.45):
        for c in (0.01, 0.1, 0.5, 1.0):
            m = ModelParams(p, c)
            a = stationary_pmf(m)
            b, _ = power_iteration(m)
            worst = max(worst, tv_distance(a, b)[0])
    elapsed = time.perf_counter() - start
    ok = worst < 1e-9 and elapsed < 60
    criterion(4, ok, f"max TV over 8 points = {worst:.2e} in {elapsed:.1f}s")
    assert ok


def test_criterion_05_coupling_tail(criterion):
    start = time.perf_counter()
    m = ModelParams(0.4, 0.2)
    alpha_err = max(abs(coupling_tail_exact(1, t, m) - m.alpha() ** t) for t in range(501))
    ok = alpha_err < 1e-12
    parts = [f"|P(xi>t)-alpha^t| <= {alpha_err:.1e}"]
    for k, (gap, t) in enumerate(((3, 5), (5, 50))):
        est, se = coupling_tail_mc(gap, t, m, 10**6, seed=[500, k])
        exact = coupling_tail_exact(gap, t, m)
        ok &= abs(est - exact) < 3 * se
        parts.append(f"({gap},{t}): mc={est:.5f} exact={exact:.5f} z={(est - exact) / se:+.2f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    criterion(5, ok, "; ".join(parts) + f" in {elapsed:.1f}s")
    assert ok


def test_criterion_06_tv_sandwich(criterion):
    start = time.perf_counter()
    checked = bad = 0
    for p in (0.2, 0.4):
        for c in (0.05, 0.2):
            for x, y in ((0, 1), (0, 5), (3, 7)):
                for _, lo, ex, err, up in tv_table(x, y, [1, 5, 20, 100], ModelParams(p, c)):
                    checked += 1
                    bad += not (lo <= ex + err + 1e-12 and ex - err <= up + 1e-12)
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 300
    criterion(6, ok, f"{checked - bad}/{checked} grid points sandwiched in {elapsed:.1f}s")
    assert ok


def test_criterion_07_mixing_at_1500(criterion):
    start = time.perf_counter()
    m = ModelParams(0.4, 0.01)
    law = evolve_n(delta(0), m, 1500, eps_trunc=1e-9)
    d, err = tv_distance(law, stationary_pmf(m))
    elapsed = time.perf_counter() - start
    ok = d + err <= 0.001 and err < 1e-6 and elapsed < 120
    criterion(7, ok, f"d_1500={d:.3e} err={err:.1e} in {elapsed:.1f}s")
    assert ok


def test_criterion_08_decay_rate(criterion):
    start = time.perf_counter()
    m = ModelParams(0.4, 0.1)
    slope = decay_rate_fit(0, 5, 50, 200, m)
    target = math.log(m.alpha())
    rel = abs(slope / target - 1)
    elapsed = time.perf_counter() - start
    ok = rel < 0.02 and elapsed < 120
    criterion(8, ok, f"slope={slope:.6f} ln(alpha)={target:.6f} rel={rel:.2%} in {elapsed:.1f}s")
    assert ok


def test_criterion_09_cutoff_profile(criterion):
    start = time.perf_counter()
    fam = CutoffFamily.named("sqrt", 0.4, 0.1)
    ns = [64, 256, 1024, 4096]
    early, late, widths = [], [], []
    for n in ns:
        lam, _, _ = cutoff_thresholds(n, 5.0, fam)
        times = sorted({max(0, round_half_up(cutoff_time(n, fam) - window(n, fam))), round_half_up(lam)})
        curve = dict((t, (d, e)) for t, d, e in distance_curve(n, fam, times))
        early.append(curve[times[0]][0])
        d, e = curve[round_half_up(lam)]
        late.append(d + e)
        widths.append(band_width(n, fam)[0])
    elapsed = time.perf_counter() - start
    ok = (
        min(early[-2:]) >= 0.9
        and all(v <= math.exp(-5) + 0.01 for v in late)
        and all(a >= b for a, b in zip(widths, widths[1:]))
        and elapsed < 1800
    )
    criterion(9, ok, "d(t-b)=" + ",".join(f"{v:.3f}" for v in early)
              + " d(lambda5)=" + ",".join(f"{v:.4f}" for v in late)
              + " width/b=" + ",".join(f"{v:.3f}" for v in widths) + f" in {elapsed:.1f}s")
    assert ok


def test_criterion_10_poisson_trends(criterion):
    start = time.perf_counter()
    fam = CutoffFamily.named("sqrt", 0.4, 0.1)
    pi_tv = [poisson_limit_check(n, fam) for n in (16, 64, 256, 1024)]
    rows = rare_severe_limit_check(rare_severe_schedule(0.5, [10, 100, 1000, 10**4]), 0.5)
    a_tv = [tv for _, tv, _ in rows]
    elapsed = time.perf_counter() - start
    ok = (
        all(a > b for a, b in zip(pi_tv, pi_tv[1:]))
        and all(a > b for a, b in zip(a_tv, a_tv[1:]))
        and elapsed < 120
    )
    criterion(10, ok, "pi_n=" + ",".join(f"{v:.4f}" for v in pi_tv)
              + " A_m=" + ",".join(f"{v:.7f}" for v in a_tv) + f" in {elapsed:.1f}s")
    assert ok


def test_criterion_11_extinction_triangle(criterion):
    start = time.perf_counter()
    s_values = (0.3, 0.5, 0.8)
    worst_solve = worst_resid = worst_z = 0.0
    for k, (p, c) in enumerate((p, c) for p in (0.2, 0.4) for c in (0.1, 0.3)):
        m = ModelParams(p, c)
        mc = pgf_tau_monte_carlo(1, s_values, m, 10**6, make_rng([1100, k]))
        for s, (mean, se) in zip(s_values, mc):
            series = pgf_tau_from_one(s, m)
            lin = pgf_tau_linear_solve(1, s, m)
            worst_solve = max(worst_solve, abs(series.value - lin.values[1]))
            worst_resid = max(worst_resid, abs(fixed_point_residual(s, m, series.value)))
            for ref in (series.value, lin.values[1]):
                worst_z = max(worst_z, abs(mean - ref) / se)
    elapsed = time.perf_counter() - start
    ok = worst_solve < 1e-8 and worst_resid < 1e-8 and worst_z < 3 and elapsed < 300
    criterion(11, ok, f"series-solve<={worst_solve:.1e} residual<={worst_resid:.1e} "
                      f"max|z| vs MC={worst_z:.2f} in {elapsed:.1f}s")
    assert ok


def test_criterion_12_large_population_scaling(criterion):
    start = time.perf_counter()
    m = ModelParams(0.4, 0.1)
    n = 10**6
    xi, tau, censored = coupled_extinction(n, m, 10**4, make_rng(1200))
    dn = dn_scale(n, m)
    med_xi = float(np.median(xi / dn))
    med_tau = float(np.median(tau / dn))
    elapsed = time.perf_counter() - start
    ok = censored == 0 and abs(med_xi - 1) <= 0.1 and abs(med_tau - 1) <= 0.1 and elapsed < 600
    criterion(12, ok, f"d_n={dn:.2f} median xi/d_n={med_xi:.3f} median tau/d_n={med_tau:.3f} "
                      f"median overshoot={float(np.median(tau - xi)):.0f} in {elapsed:.1f}s")
    assert ok


def test_criterion_13_extinction_tail(criterion):
    start = time.perf_counter()
    m = ModelParams(0.3, 0.3)
    times, cens = sample_extinction_times(0, m, 10**6, make_rng(1300), 10**5)
    srt = np.sort(times)
    t_lo = int(np.quantile(times, 0.9))  # past the atom at t=1 and the early transient
    t_hi = int(srt[-100])  # keep at least 100 survivors in the window
    slope, _, r2 = survival_log_slope(times, cens, t_lo, t_hi)
    elapsed = time.perf_counter() - start
    ok = r2 > 0.99 and slope < 0 and elapsed < 120
    criterion(13, ok, f"window [{t_lo},{t_hi}] slope={slope:.4f} R2={r2:.5f} in {elapsed:.1f}s")
    assert ok


def test_criterion_14_cli_determinism(criterion, tmp_path, small_configs):
    start = time.perf_counter()
    mismatched = []
    for name, cfg in small_configs.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{name}_{run}"
            assert main([name, "--config", str(path), "--out", str(out)]) == 0
            outs.append(out)
        files = json.loads((outs[0] / "manifest.json").read_text())["outputs"]
        mismatched += [f"{name}/{f}" for f in files
                       if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes()]
    elapsed = time.perf_counter() - start
    ok = not mismatched
    criterion(14, ok, f"{len(small_configs)} experiments rerun, mismatches={mismatched or 'none'} "
                      f"in {elapsed:.1f}s")
    assert ok
