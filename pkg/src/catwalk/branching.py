"""The chain as a branching process with immigration in a random environment.

An environment is a 0/1 sequence: 1 means a birth step, 0 a catastrophe.
Reading the chain just after each catastrophe gives the sampled chain
Z_{k+1} = Bin(Z_k + R_k, 1 - c), with R_k ~ Geom^-(1 - p) births in between.
"""

import math
from dataclasses import dataclass

import numpy as np

from .chain import ModelParams, Trajectory
from .pmf import DEFAULT_EPS, SeriesResult, Pmf, binomial_thin, delta, poisson, shift, tv_distance
from .stationary import factor_ratio, factor_product, residual_mean


@dataclass(frozen=True)
class Environment:
    omega: np.ndarray
    p: float = float("nan")

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=np.int8)
        if omega.ndim != 1 or np.any((omega != 0) & (omega != 1)):
            raise ValueError("environment entries must be 0 or 1")
        omega = omega.copy()
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)

    def __len__(self):
        return self.omega.size


def sample_environment(T, p, rng):
    return Environment((rng.random(int(T)) < p).astype(np.int8), p)


def regeneration_times(env):
    """Catastrophe times T_1 < T_2 < ... with steps numbered 1..T (T_0 = 0)."""
    return np.flatnonzero(env.omega == 0) + 1


def sampled_chain_step(z, r, c, rng):
    """Z' = Bin(z + r, 1 - c)."""
    n = int(z) + int(r)
    if n == 0 or c == 1.0:
        return 0
    return int(rng.binomial(n, 1.0 - c))


def births_between(params, size, rng):
    """Geom^-(1 - p) birth counts between consecutive catastrophes."""
    return rng.geometric(1.0 - params.p, size=size) - 1


def simulate_sampled_chain(z0, steps, params, rng):
    """One path Z_0..Z_steps of the sampled chain."""
    rs = births_between(params, steps, rng)
    out = np.empty(steps + 1, dtype=np.int64)
    out[0] = z = int(z0)
    for k in range(steps):
        z = sampled_chain_step(z, rs[k], params.c, rng)
        out[k + 1] = z
    return out


def sampled_chain_endpoints(z0, steps, params, n_paths, rng):
    """Z_steps for ``n_paths`` independent sampled chains (vectorised)."""
    z = np.full(n_paths, int(z0), dtype=np.int64)
    for _ in range(steps):
        z = rng.binomial(z + births_between(params, n_paths, rng), 1.0 - params.c)
    return z


def chain_at_regeneration(x0, k, params, n_paths, rng):
    """X at its k-th catastrophe, simulating the original chain step by step."""
    keep = 1.0 - params.c
    x = np.full(n_paths, int(x0), dtype=np.int64)
    seen = np.zeros(n_paths, dtype=np.int64)
    active = np.arange(n_paths)
    while active.size:
        birth = rng.random(active.size) < params.p
        xa = x[active]
        xa = np.where(birth, xa + 1, rng.binomial(xa, keep))
        x[active] = xa
        seen[active] += ~birth
        active = active[seen[active] < k]
    return x


def z_inf_pgf(s, params, tol=1e-15):
    """Generating function of the stationary sampled chain.

    Product over k >= 1 of (1 - r_k)/(1 - r_k s), the k >= 1 factors of the
    stationary law. The neglected log-factors beyond index j total at most
    (1 - s) sum_{k>j} r_k/(1 - r_k).
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    log_val = 0.0
    k = 1
    while True:
        r = factor_ratio(k, params)
        log_val += math.log1p(-r) - math.log1p(-r * s)
        rest = (1.0 - s) * residual_mean(k, params)
        if rest < tol or r == 0.0:
            break
        k += 1
    val = math.exp(log_val)
    return SeriesResult(val, k, val * math.expm1(rest))


def z_inf_pmf(params, eps_trunc=DEFAULT_EPS):
    return factor_product(params, eps_trunc, first=1)


def rare_severe_schedule(beta, ms):
    """p_m = 1 - 1/m, c_m = 1 - beta/m, so (1 - c_m)/(1 - p_m) = beta."""
    out = []
    for m in ms:
        if not (m > 1 and beta < m):
            raise ValueError(f"schedule out of range at m={m}")
        out.append((m, 1.0 - 1.0 / m, 1.0 - beta / m))
    return out


def rare_severe_limit_check(schedule, beta, eps_trunc=DEFAULT_EPS):
    """Rows (m, tv_to_poisson, mean_A) for the k >= 1 part A_m at each (p_m, c_m)."""
    target = poisson(beta, eps_trunc)
    rows = []
    for m, p, c in schedule:
        params = ModelParams(p, c)
        a = z_inf_pmf(params, eps_trunc)
        tv, _ = tv_distance(a, target)
        mean_a = p * (1.0 - c) / ((1.0 - p) * c)
        rows.append((m, tv, mean_a))
    return rows


def quenched_simulate(x0, env, c, rng):
    """Chain path with the environment held fixed."""
    keep = 1.0 - c
    states = np.empty(len(env) + 1, dtype=np.int64)
    states[0] = x = int(x0)
    for t, w in enumerate(env.omega):
        if w:
            x += 1
        elif x:
            x = int(rng.binomial(x, keep))
        states[t + 1] = x
    return Trajectory(states)


def quenched_endpoints(x0, omegas, c, rng):
    """X_T for each row of the (n_paths, T) environment matrix ``omegas``."""
    omegas = np.asarray(omegas)
    keep = 1.0 - c
    x = np.full(omegas.shape[0], int(x0), dtype=np.int64)
    for t in range(omegas.shape[1]):
        w = omegas[:, t] == 1
        x = np.where(w, x + 1, rng.binomial(x, keep))
    return x


def quenched_pmf(x0, env, c, eps_trunc=DEFAULT_EPS):
    """Exact law of X_T given the environment: shift on births, thinning on catastrophes."""
    dist = delta(x0)
    for w in env.omega:
        dist = shift(dist) if w else binomial_thin(dist, 1.0 - c, eps_trunc)
    return dist


def rcinar_step(x, omega_t, c, rng):
    """Bin(x, c_t) + omega_t with thinning coefficient c_t = omega_t + (1 - omega_t)(1 - c)."""
    coef = omega_t + (1 - omega_t) * (1.0 - c)
    return int(rng.binomial(int(x), coef)) + int(omega_t)


def empirical_pmf(samples):
    counts = np.bincount(np.asarray(samples, dtype=np.int64))
    return Pmf(counts / counts.sum(), 0.0)
