"""Monotone coupling of two copies of the chain and the TV bounds it yields.

The copies start at x < y. A birth moves both up by one; a catastrophe thins
the lower copy X and the gap H independently, so X' = X + H is again a copy
of the chain and the gap never grows.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import UnreliableEstimate
from .pmf import DEFAULT_EPS, Pmf, delta, evolve, tv_distance
from .rng import run_shards


@dataclass(frozen=True)
class CoupledState:
    x: int
    h: int

    @property
    def upper(self):
        return self.x + self.h


def coupled_step(state, params, rng):
    if rng.random() < params.p:
        return CoupledState(state.x + 1, state.h)
    keep = 1.0 - params.c
    x = int(rng.binomial(state.x, keep)) if state.x else 0
    h = int(rng.binomial(state.h, keep)) if state.h else 0
    return CoupledState(x, h)


def simulate_coupled(x, y, t, params, n_paths, rng):
    """Run ``n_paths`` coupled pairs for ``t`` steps.

    Returns ``(X_t, H_t, xi)`` arrays, with ``xi = -1`` for pairs still apart.
    """
    keep = 1.0 - params.c
    xs = np.full(n_paths, int(x), dtype=np.int64)
    hs = np.full(n_paths, int(y) - int(x), dtype=np.int64)
    xi = np.where(hs == 0, 0, -1)
    for step in range(1, t + 1):
        birth = rng.random(n_paths) < params.p
        cat = ~birth
        xs[birth] += 1
        xs[cat] = rng.binomial(xs[cat], keep)
        hs[cat] = rng.binomial(hs[cat], keep)
        xi[(hs == 0) & (xi < 0)] = step
    return xs, hs, xi


def coupling_tail_exact(gap, t, params):
    """P(xi > t) for copies started ``gap`` apart.

    Sums over the number k of catastrophes N_t ~ Bin(t, 1-p):
    sum_k P(N_t = k) [1 - (1 - (1-c)^k)^gap].
    """
    if gap <= 0:
        return 0.0
    k = np.arange(t + 1)
    weights = stats.binom.pmf(k, t, 1.0 - params.p)
    if params.c == 1.0:
        survive = (k == 0).astype(float)
    else:
        survive = np.exp(k * math.log1p(-params.c))
    with np.errstate(divide="ignore"):
        miss = -np.expm1(gap * np.log1p(-survive))
    miss[survive == 1.0] = 1.0
    return float(np.dot(weights, miss))


def coupling_tail_upper(gap, t, params):
    """Union bound gap * alpha^t; returned as ``(raw, clamped_to_1)``."""
    raw = gap * params.alpha() ** t
    return raw, min(raw, 1.0)


def coupling_tail_mc(gap, t, params, n_paths, seed, n_shards=8, threads=1):
    """Monte Carlo P(xi > t): (estimate, standard error)."""

    def shard(n, rng):
        _, hs, _ = simulate_coupled(0, gap, t, params, n, rng)
        return int((hs > 0).sum())

    hits = sum(run_shards(shard, n_paths, seed, n_shards, threads))
    est = hits / n_paths
    return est, math.sqrt(max(est * (1 - est), 1e-300) / n_paths)


def tv_upper(x, y, t, params):
    return abs(y - x) * params.alpha() ** t


def tv_upper_stationary(x, t, params, pi):
    """Bound on ||P_x(X_t in .) - pi||: alpha^t * sum_y |y - x| pi(y).

    The mean absolute deviation is written as mu - x + 2 sum_{y<=x} (x-y) pi(y)
    (equal to x - mu + 2 sum_{y>x} (y-x) pi(y)) with the exact mean, which only
    needs pi below x and so is unaffected by pi's truncated tail.
    """
    mu = params.mean()
    ys = np.arange(min(x + 1, len(pi)))
    below = float(np.dot(x - ys, pi.probs[: ys.size]))
    return (mu - x + 2.0 * below) * params.alpha() ** t


def tv_exact_curve(x, y, times, params, eps_trunc=DEFAULT_EPS):
    """[(t, d_t(x, y), err)] for sorted ``times``, evolving both laws incrementally."""
    a, b = delta(x), delta(y)
    out = []
    now = 0
    for t in times:
        for _ in range(t - now):
            a = evolve(a, params, eps_trunc)
            b = evolve(b, params, eps_trunc)
        now = t
        val, err = tv_distance(a, b)
        out.append((t, val, err))
    return out


def tv_exact(x, y, t, params, eps_trunc=DEFAULT_EPS):
    _, val, err = tv_exact_curve(x, y, [t], params, eps_trunc)[0]
    return val, err


def _tilted_block_curve(x, y, times, params, eps_trunc):
    """max_j sum_{k=x}^{y-1} P_k^(tilted)(X_t = j) for each t in ``times``.

    The k-sum is linear in the initial law, so one evolution of the uniform
    mixture over [x, y) serves every k at once.
    """
    m = y - x
    if params.c == 1.0:
        # tilted birth probability is 1: the mixture is shifted, never spread
        return [1.0] * len(times)
    tilted = params.tilted()
    probs = np.zeros(y)
    probs[x:y] = 1.0 / m
    dist = Pmf(probs, 0.0)
    out = []
    now = 0
    for t in times:
        for _ in range(t - now):
            dist = evolve(dist, tilted, eps_trunc)
        now = t
        # explicit entries are lower bounds, so the max stays a valid lower bound
        out.append(m * float(dist.probs.max()))
    return out


def tv_lower_curve(x, y, times, params, eps_trunc=DEFAULT_EPS):
    if not x < y:
        raise ValueError("tv_lower needs x < y")
    alpha = params.alpha()
    block = _tilted_block_curve(x, y, times, params, eps_trunc)
    return [(t, alpha**t * b) for t, b in zip(times, block)]


def tv_lower(x, y, t, params, eps_trunc=DEFAULT_EPS):
    """alpha^t max_j sum_{k=x}^{y-1} P_k^(tilted)(X_t = j).

    At c = 1 the tilted chain moves up deterministically and the bound is p^t,
    which is then the exact distance.
    """
    return tv_lower_curve(x, y, [t], params, eps_trunc)[0][1]


def tv_table(x, y, times, params, eps_trunc=DEFAULT_EPS):
    """Rows (t, tv_lower, tv_exact, tv_exact_err, tv_upper)."""
    times = sorted(times)
    lower = tv_lower_curve(x, y, times, params, eps_trunc)
    exact = tv_exact_curve(x, y, times, params, eps_trunc)
    rows = []
    for (t, lo), (_, val, err) in zip(lower, exact):
        rows.append((t, lo, val, err, tv_upper(x, y, t, params)))
    return rows


def conditional_law_given_uncoupled(x, y, t, params, n_paths, rng, min_paths=100):
    """Empirical law of X_t over coupled pairs with xi > t.

    Returns ``(Pmf, n_retained)``; warns with UnreliableEstimate when fewer than
    ``min_paths`` pairs remain apart.
    """
    if not x < y:
        raise ValueError("need x < y")
    xs, hs, _ = simulate_coupled(x, y, t, params, n_paths, rng)
    kept = xs[hs > 0]
    if kept.size < min_paths:
        warnings.warn(
            f"only {kept.size} of {n_paths} paths uncoupled at t={t}", UnreliableEstimate, stacklevel=2
        )
    if kept.size == 0:
        return None, 0
    counts = np.bincount(kept)
    return Pmf(counts / kept.size, 0.0), int(kept.size)


def spectral_gap(params):
    """1 - alpha = c (1 - p)."""
    return params.c * (1.0 - params.p)


def decay_rate_fit(x, y, t_lo, t_hi, params, eps_trunc=DEFAULT_EPS):
    """Least-squares slope of ln d_t(x, y) over t in [t_lo, t_hi]."""
    times = list(range(t_lo, t_hi + 1))
    curve = tv_exact_curve(x, y, times, params, eps_trunc)
    ts = np.array([t for t, _, _ in curve], dtype=float)
    ys = np.log([v for _, v, _ in curve])
    return float(np.polyfit(ts, ys, 1)[0])

