"""Cutoff experiments for families with p_n, c_n -> 0 and p_n / c_n -> beta.

Started from y_n, the distance to stationarity stays near 1 until roughly
t_n = ln y_n / c_n and then collapses within a window b_n that is small
relative to t_n. Everything here is computed by exact pmf evolution.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .chain import ModelParams
from .pmf import DEFAULT_EPS, delta, evolve, poisson, tv_distance
from .stationary import stationary_pmf


def round_half_up(x):
    return int(math.floor(x + 0.5))


def sqrt_schedule(beta):
    """c_n = n^{-1/2}, p_n = beta n^{-1/2}, y_n = n."""

    def schedule(n):
        c = n**-0.5
        return beta * c, c, float(n)

    return schedule


SCHEDULES = {"sqrt": sqrt_schedule}


@dataclass
class CutoffFamily:
    beta: float
    schedule: object  # n -> (p_n, c_n, y_n)
    epsilon: float = 0.1
    name: str = "custom"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def named(cls, schedule, beta, epsilon=0.1):
        return cls(beta, SCHEDULES[schedule](beta), epsilon, schedule)

    def terms(self, n):
        p, c, y = self.schedule(n)
        if not (0 < p < 1 and 0 < c < 1 and y >= 1):
            raise ValueError(f"schedule out of range at n={n}: p={p}, c={c}, y={y}")
        if abs(p / c - self.beta) > 0.1 * self.beta:
            raise ValueError(f"p_n/c_n = {p / c:.4g} is not within 10% of beta at n={n}")
        return p, c, y

    def params(self, n):
        p, c, _ = self.terms(n)
        return ModelParams(p, c)

    def start(self, n):
        return round_half_up(self.terms(n)[2])


def cutoff_time(n, family):
    _, c, y = family.terms(n)
    return math.log(y) / c


def window(n, family):
    _, c, y = family.terms(n)
    ln_y = math.log(y)
    lnln = math.log(ln_y) if ln_y > 0 else -math.inf
    return (1.0 + family.epsilon) * (0.5 * ln_y + lnln / c)


def cutoff_thresholds(n, theta, family):
    """(lambda_n, nu_n, gamma_n) at level theta.

    lambda_n = (ln y + theta)/c;
    nu_n = (ln y - ln ln y - ln(p/c) - theta (ln y)^{-1/4}) / (-ln(1 - c));
    gamma_n = (1 + theta / (2 (ln y)^{1/4})) p nu_n.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    p, c, y = family.terms(n)
    ln_y = math.log(y)
    if not ln_y > 1:
        raise ValueError("need ln y_n > 1")
    quart = ln_y**0.25
    lam = (ln_y + theta) / c
    nu = (ln_y - math.log(ln_y) - math.log(p / c) - theta / quart) / -math.log1p(-c)
    if nu <= 0:
        raise ValueError(f"nu_n <= 0 at n={n}: outside the asymptotic regime")
    gamma = (1.0 + theta / (2.0 * quart)) * p * nu
    return lam, nu, gamma


def chernoff_bounds(m, q, delta_):
    """(upper_tail, lower_tail) = (exp(-d^2 q m / 2), exp(-d^2 q m / 3)).

    Stated for P(X > (1+d) q m) and P(X < (1-d) q m), X ~ Bin(m, q).
    """
    if not 0 < delta_ < 1:
        raise ValueError("delta must lie in (0, 1)")
    mu = q * m
    return math.exp(-delta_**2 * mu / 2.0), math.exp(-delta_**2 * mu / 3.0)


def binomial_tails(m, q, delta_):
    """Exact (P(X > (1+d) q m), P(X < (1-d) q m)) for X ~ Bin(m, q)."""
    hi = (1.0 + delta_) * q * m
    lo = (1.0 - delta_) * q * m
    upper = float(stats.binom.sf(math.floor(hi), m, q))
    lo_k = math.ceil(lo) - 1
    lower = float(stats.binom.cdf(lo_k, m, q)) if lo_k >= 0 else 0.0
    return upper, lower


def distance_curve(n, family, times, eps_trunc=DEFAULT_EPS, target="stationary"):
    """[(t, d_t, err)] from delta(y_n) for sorted ``times``.

    ``target="stationary"`` measures against the stationary law;
    ``target="zero"`` against the chain started at 0 (two-start distance).
    """
    params = family.params(n)
    dist = delta(family.start(n))
    if target == "stationary":
        ref = stationary_pmf(params, eps_trunc)
    elif target == "zero":
        ref = delta(0)
    else:
        raise ValueError(f"unknown target {target!r}")
    out = []
    now = 0
    for t in times:
        if t < now:
            raise ValueError("times must be sorted")
        for _ in range(t - now):
            dist = evolve(dist, params, eps_trunc)
            if target == "zero":
                ref = evolve(ref, params, eps_trunc)
        now = t
        val, err = tv_distance(dist, ref)
        out.append((t, val, err))
    return out


def profile_times(n, family, scaled_grid):
    t_n, b_n = cutoff_time(n, family), window(n, family)
    return [max(0, round_half_up(t_n + u * b_n)) for u in scaled_grid]


def cutoff_profile(family, ns, scaled_grid, eps_trunc=DEFAULT_EPS):
    """Rows (n, t, u, d, err) with t = round(t_n + u b_n)."""
    rows = []
    for n in ns:
        times = profile_times(n, family, scaled_grid)
        order = np.argsort(times, kind="stable")
        curve = distance_curve(n, family, sorted(times), eps_trunc)
        by_index = {}
        for rank, idx in enumerate(order):
            by_index[idx] = curve[rank]
        for i, u in enumerate(scaled_grid):
            t, d, err = by_index[i]
            rows.append((n, t, u, d, err))
    return rows


def band_width(n, family, upper=0.9, lower=0.1, eps_trunc=DEFAULT_EPS, t_max=None):
    """Width, in units of b_n, of the time band where upper >= d_t > lower.

    Returns ``(width, t_upper, t_lower)`` with t_upper the first t with
    d_t <= upper and t_lower the first t with d_t <= lower.
    """
    params = family.params(n)
    pi = stationary_pmf(params, eps_trunc)
    dist = delta(family.start(n))
    t_max = t_max or int(10 * cutoff_time(n, family)) + 100
    t_hi = None
    for t in range(t_max + 1):
        if t:
            dist = evolve(dist, params, eps_trunc)
        d, _ = tv_distance(dist, pi)
        if t_hi is None and d <= upper:
            t_hi = t
        if d <= lower:
            return (t - t_hi) / window(n, family), t_hi, t
    raise RuntimeError("distance did not fall below the lower level")


def poisson_limit_check(n, family, eps_trunc=DEFAULT_EPS):
    """TV between the stationary law at (p_n, c_n) and Poisson(beta)."""
    pi = stationary_pmf(family.params(n), eps_trunc)
    val, _ = tv_distance(pi, poisson(family.beta, eps_trunc))
    return val


def mean_gap(n, family):
    return abs(family.params(n).mean() - family.beta)


def nu_identity_sides(n, theta, family):
    """Both sides of y (1-c)^nu = (p/c) ln y exp(theta (ln y)^{-1/4})."""
    p, c, y = family.terms(n)
    _, nu, _ = cutoff_thresholds(n, theta, family)
    ln_y = math.log(y)
    lhs = y * (1.0 - c) ** nu
    rhs = (p / c) * ln_y * math.exp(theta / ln_y**0.25)
    return lhs, rhs


def ordering_onset(family, ns, theta):
    """Smallest n in ``ns`` from which nu_n(theta) >= t_n - b_n holds for all later n."""
    ok = []
    for n in ns:
        try:
            _, nu, _ = cutoff_thresholds(n, theta, family)
        except ValueError:
            ok.append(False)
            continue
        ok.append(nu >= cutoff_time(n, family) - window(n, family))
    onset = None
    for n, good in zip(ns, ok):
        if good and onset is None:
            onset = n
        elif not good:
            onset = None
    return onset
