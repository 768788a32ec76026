"""Stationary law of the catastrophe walk.

The stationary law is the law of sum_k Bin(R_k, (1-c)^k) with R_k IID
Geom^-(1-p). Thinning a Geom^-(1-p) variable by eps gives Geom^-(1-r) with
r = p eps / (1 - p (1 - eps)), so the law is a convolution of independent
shifted geometrics, one per k.
"""

import math

from .pmf import DEFAULT_EPS, SeriesResult, convolve, delta, evolve, fold_tail, geom_minus, tv_distance


def factor_ratio(k, params):
    """Success ratio r_k of the k-th geometric factor (factor law is Geom^-(1 - r_k))."""
    eps = (1.0 - params.c) ** k if k else 1.0
    return params.p * eps / (1.0 - params.p * (1.0 - eps))


def residual_mean(j, params):
    """Mean carried by all factors k > j: p (1-c)^(j+1) / ((1-p) c).

    Uses r/(1-r) = p eps / (1 - p) for each factor.
    """
    q = 1.0 - params.c
    return params.p * q ** (j + 1) / ((1.0 - params.p) * params.c)


def _cutoff_index(params, eps_trunc, first=0):
    j = first
    if params.c == 1.0:
        return j
    # closed form for the smallest j with residual_mean(j) < eps_trunc / 10
    q = 1.0 - params.c
    target = eps_trunc / 10 * (1.0 - params.p) * params.c / params.p
    j = max(first, int(math.ceil(math.log(target) / math.log(q))) - 1)
    while residual_mean(j, params) >= eps_trunc / 10:
        j += 1
    return j


def factor_product(params, eps_trunc=DEFAULT_EPS, first=0):
    """Convolution of the geometric factors k = first, first+1, ...

    Factors beyond the cutoff are accounted for through the exact product of
    their atoms at zero, so the explicit entries stay lower bounds.
    """
    j_max = _cutoff_index(params, eps_trunc, first)
    n_factors = j_max - first + 1
    per_factor = eps_trunc / (2 * n_factors)
    dist = delta(0)
    for k in range(first, j_max + 1):
        r = factor_ratio(k, params)
        if r == 0.0:
            break
        factor = geom_minus(1.0 - r, per_factor)
        dist = convolve(dist, factor, eps_trunc=0.0)
    # P(all factors beyond j_max vanish) = prod (1 - r_k); log1p keeps precision
    log_zero = 0.0
    k = j_max + 1
    while True:
        r = factor_ratio(k, params) if params.c < 1.0 else 0.0
        if r < 1e-300:
            break
        log_zero += math.log1p(-r)
        if r < 1e-18:
            break
        k += 1
    scale = math.exp(log_zero)
    probs = dist.probs * scale
    # unknown mass: the factors' own tails plus everything moved off the atoms
    tail = max(1.0 - float(probs.sum()), dist.tail_mass)
    return fold_tail(probs, tail, eps_trunc)


def stationary_pmf(params, eps_trunc=DEFAULT_EPS):
    return factor_product(params, eps_trunc, first=0)


def stationary_mean(params):
    return params.mean()


def power_iteration(params, eps_trunc=DEFAULT_EPS, tol=1e-12, max_steps=10**6, start=None):
    """Iterate the kernel from ``start`` (default delta(0)) until successive TV < ``tol``."""
    dist = delta(0) if start is None else start
    for step in range(1, max_steps + 1):
        nxt = evolve(dist, params, eps_trunc)
        diff, _ = tv_distance(dist, nxt)
        dist = nxt
        if diff < tol:
            return dist, step
    return dist, max_steps


def log_persistence_series(params, tol=1e-16):
    """ln E_0[tau] = sum_j log1p(p/(1-p) (1-c)^j), compensated, with remainder bound.

    The remainder after term j is at most sum_{k>j} x_k = x_{j+1} / c, since
    log1p(x) <= x.
    """
    ratio = params.p / (1.0 - params.p)
    q = 1.0 - params.c
    terms = []
    j = 0
    while True:
        x = ratio * (q**j if j else 1.0)
        terms.append(math.log1p(x))
        rest = ratio * q ** (j + 1) / params.c if q > 0 else 0.0
        if rest <= tol * max(1.0, abs(sum(terms))) or x == 0.0:
            return SeriesResult(math.fsum(terms), j + 1, rest)
        j += 1


def pi_zero(params, tol=1e-15):
    """pi(0) = prod_j (1-p) / (1 - p (1 - (1-c)^j)) as a SeriesResult."""
    log_e = log_persistence_series(params, tol)
    value = math.exp(-log_e.value)
    # remainder r in the log gives pi0 * (1 - e^{-r}) <= pi0 * r
    return SeriesResult(value, log_e.terms_used, value * log_e.error_bound + 4e-16 * value)


def persistence_bounds(params):
    """Bracket (lower, upper) for ln E_0[tau]; only defined for p < 1/2."""
    p, c = params.p, params.c
    if p >= 0.5:
        return None
    upper = p / (c * (1.0 - p))
    lower = upper - 0.5 * p * p / ((1.0 - p) ** 2 * (1.0 - (1.0 - c) ** 2))
    return lower, upper


def persistence_time(params, tol=1e-16):
    """E_0[tau] = 1 / pi(0), reported on the log scale.

    Returns a dict with the SeriesResult for ln E_0[tau], the value itself
    (``inf`` if it overflows a double) and the closed-form log bracket, which is
    ``None`` when p >= 1/2.
    """
    log_e = log_persistence_series(params, tol)
    try:
        value = math.exp(log_e.value)
    except OverflowError:
        value = math.inf
    bounds = persistence_bounds(params)
    return {
        "log_value": log_e,
        "value": value,
        "log_bounds": bounds,
        "bounds_available": bounds is not None,
    }


def tilted_stationary_pmf(params, eps_trunc=DEFAULT_EPS):
    return stationary_pmf(params.tilted(), eps_trunc)


def kernel_residual(dist, params):
    """TV between ``dist`` and its one-step image (zero for a stationary law)."""
    return tv_distance(dist, evolve(dist, params, eps_trunc=0.0))

