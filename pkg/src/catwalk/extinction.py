"""First extinction time tau = inf{t >= 1 : X_t = 0}.

Three independent routes to a_n(s) = E_n[s^tau]:

* the alternating eta-series for a_1, lifted to a_n through the first-step
  relation (``pgf_tau_from_one``, ``pgf_tau_from_n``);
* a truncated linear system built from the same first-step relation with two
  boundary closures that bracket the truth (``pgf_tau_linear_solve``);
* plain Monte Carlo (``pgf_tau_monte_carlo``).

Large-population experiments use the coupling of the chains started at 0 and n.
"""

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import NumericalFault
from .pmf import SeriesResult, _binomial_rows


@dataclass(frozen=True)
class EtaSeriesParams:
    s: float
    tol: float = 1e-14
    max_terms: int = 400

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0, 1)")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def _check_s(s, params):
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    if params.c >= 1.0:
        raise ValueError("the eta-series needs c < 1")


def eta_n(n, s, params):
    """eta_n(s) = (-1)^n (1-c)^{n(n-1)/2} ((1-p)s/(1-ps))^n / prod_{k<=n} (1 - (1-c)^k)."""
    if n == 0:
        return 1.0
    _check_s(s, params)
    q = 1.0 - params.c
    x = (1.0 - params.p) * s / (1.0 - params.p * s)
    log_mag = 0.5 * n * (n - 1) * math.log(q) + n * math.log(x)
    log_mag -= sum(math.log1p(-(q**k)) for k in range(1, n + 1))
    sign = -1.0 if n % 2 else 1.0
    return sign * math.exp(log_mag)


def h_k(z, k, c):
    """k-fold iterate of h(z) = (z - cz)/(1 - cz), closed form."""
    qk = (1.0 - c) ** k
    return z * qk / (1.0 - (1.0 - qk) * z)


def h_iterate(z, k, c):
    for _ in range(k):
        z = (z - c * z) / (1.0 - c * z)
    return z


def _a1_mp(s, params, tol, max_terms):
    """a_1(s) in mpmath arithmetic at the working precision; returns (value, error, terms)."""
    p, c = mpmath.mpf(params.p), mpmath.mpf(params.c)
    s = mpmath.mpf(s)
    q = 1 - c
    ps = p * s
    x = (1 - p) * s / (1 - ps)
    eta = mpmath.mpf(1)
    num = eta
    den = eta * ps  # h_0(ps) = ps
    n = 0
    while True:
        n += 1
        if n > max_terms:
            raise NumericalFault("eta-series did not converge within max_terms")
        eta = -eta * x * q ** (n - 1) / (1 - q**n)
        hn = ps * q**n / (1 - ps + ps * q**n)
        num += eta
        den += eta * hn
        # |eta_{m+1}/eta_m| = x q^m / (1 - q^{m+1}) is decreasing in m, so once it
        # is below 1/2 each remainder is at most twice the next term
        ratio_next = x * q**n / (1 - q ** (n + 1))
        if ratio_next < 0.5 and abs(eta) < tol * abs(num) and abs(eta * hn) < tol * abs(den):
            break
    nxt = abs(eta) * ratio_next
    err_num = 2 * nxt
    err_den = 2 * nxt
    if abs(den) <= 4 * err_den:
        raise NumericalFault("denominator series is numerically zero")
    ratio = num / den
    value = 1 + (1 - s) / ps - ratio
    err = abs(ratio) * (err_num / abs(num) + err_den / abs(den)) * 2
    err += mpmath.mpf(10) ** (-mpmath.mp.dps + 3) * (1 + abs(ratio))
    return value, err, n + 1


def pgf_tau_from_one(s, params, tol=1e-14, max_terms=400, dps=40):
    """E_1[s^tau] from the eta-series.

    Both series run from n = 0 (eta_0 = 1, h_0(ps) = ps):

        a_1 = 1 + (1-s)/(ps) - sum_n eta_n / sum_n eta_n h_n(ps),

    with h_n(ps) = ps (1-c)^n / (1 - ps + ps (1-c)^n). Summation is carried out
    in ``dps``-digit arithmetic; ``error_bound`` covers both truncations and the
    final rounding to double.
    """
    _check_s(s, params)
    with mpmath.workdps(dps):
        value, err, terms = _a1_mp(s, params, mpmath.mpf(tol), max_terms)
        v = float(value)
        return SeriesResult(v, terms, float(err) + abs(v) * 2.3e-16)


def pgf_tau_from_n(n_start, s, params, tol=None, dps=60, max_error=1e-6):
    """E_n[s^tau] by lifting a_1 through the first-step relation

        a_m = ps a_{m+1} + (1-p)s sum_{k=0}^m C(m,k) c^{m-k} (1-c)^k a_k,  a_0 = 1,

    solved forward for a_{m+1}. Each step divides by ps, so errors in a_1 are
    amplified roughly like (ps)^{-m}; the arithmetic runs at ``dps`` digits and
    the propagated error bound is tracked. Raises NumericalFault when an
    iterate leaves [0, 1] by more than its bound or the final bound exceeds
    ``max_error`` (use ``pgf_tau_linear_solve`` for such n).
    """
    if n_start < 1:
        raise ValueError("n_start must be >= 1")
    _check_s(s, params)
    with mpmath.workdps(dps):
        inner_tol = tol if tol is not None else mpmath.mpf(10) ** (-(dps - 8))
        a1, e1, terms = _a1_mp(s, params, mpmath.mpf(inner_tol), 2000)
        p, c, sm = mpmath.mpf(params.p), mpmath.mpf(params.c), mpmath.mpf(s)
        ps = p * sm
        ulp = mpmath.mpf(10) ** (-dps + 2)
        a = [mpmath.mpf(1), a1]
        err = [mpmath.mpf(0), e1]
        for m in range(1, n_start):
            weights = [mpmath.binomial(m, k) * c ** (m - k) * (1 - c) ** k for k in range(m + 1)]
            acc = mpmath.fsum(w * ak for w, ak in zip(weights, a))
            acc_err = mpmath.fsum(w * ek for w, ek in zip(weights, err))
            nxt = (a[m] - (1 - p) * sm * acc) / ps
            e_nxt = (err[m] + (1 - p) * sm * acc_err) / ps + ulp * (1 + abs(nxt)) / ps
            if nxt < -e_nxt or nxt > 1 + e_nxt:
                raise NumericalFault(f"recursion unstable at m={m + 1}: value {float(nxt)}")
            a.append(nxt)
            err.append(e_nxt)
        value, bound = a[n_start], err[n_start]
        if bound > max_error:
            raise NumericalFault(
                f"error bound {float(bound):.3g} at n={n_start} exceeds {max_error}; "
                "raise dps or use pgf_tau_linear_solve"
            )
        return SeriesResult(float(value), terms, float(bound) + 2.3e-16)


def _first_step_system(K, s, params, closure):
    p, c = params.p, params.c
    w = _binomial_rows(1.0 - c, K + 1)  # w[m, k] = C(m,k) (1-c)^k c^(m-k)
    A = np.eye(K)
    b = np.zeros(K)
    for m in range(1, K + 1):
        i = m - 1
        b[i] = (1.0 - p) * s * w[m, 0]
        A[i, :m] -= (1.0 - p) * s * w[m, 1 : m + 1]
        if m < K:
            A[i, m] -= p * s
        elif closure == "copy":
            A[i, K - 1] -= p * s
    return A, b


@dataclass
class LinearSolveResult:
    values: np.ndarray  # midpoint estimates for a_0..a_{n_max}
    lower: np.ndarray
    upper: np.ndarray

    @property
    def error_bound(self):
        # half bracket width plus an allowance for the dense solve's rounding
        return 0.5 * (self.upper - self.lower) + 1e-14


def pgf_tau_linear_solve(n_max, s, params, K=None, max_width=1e-6):
    """a_0..a_{n_max} from the first-step system truncated at K unknowns.

    Closing with a_{K+1} = 0 gives a lower bound and with a_{K+1} = a_K an
    upper bound (the system is monotone and a_n is non-increasing in n).
    """
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    K = n_max + 60 if K is None else K
    if K < n_max + 10:
        raise ValueError("K must be at least n_max + 10")
    lo = np.linalg.solve(*_first_step_system(K, s, params, "zero"))
    hi = np.linalg.solve(*_first_step_system(K, s, params, "copy"))
    lower = np.concatenate([[1.0], lo[:n_max]])
    upper = np.concatenate([[1.0], hi[:n_max]])
    upper = np.maximum(upper, lower)
    if upper[-1] - lower[-1] > max_width:
        raise NumericalFault(f"bracket width {upper[-1] - lower[-1]:.3g} at n={n_max}; increase K")
    return LinearSolveResult(0.5 * (lower + upper), lower, upper)


def fixed_point_residual(s, params, a1, tol=1e-16, max_terms=400):
    """Right-hand side of the iterated functional equation at z = ps.

    sum_{n>=0} g(s, h_n(ps)) eta_n(s), with g(s,z) = ps - z + z(ps a_1 + (1-p)s);
    vanishes when ``a1`` is the true E_1[s^tau].
    """
    p, c = params.p, params.c
    ps = p * s
    slope = ps * a1 + (1.0 - p) * s

    def g(z):
        return ps - z + z * slope

    terms = [g(ps)]
    for n in range(1, max_terms):
        e = eta_n(n, s, params)
        term = g(h_k(ps, n, c)) * e
        terms.append(term)
        if abs(e) < tol:
            break
    return math.fsum(terms)


def dn_scale(n, params):
    """Extinction-time scale -ln n / ((1-p) ln(1-c)) for a population of size n."""
    if params.c >= 1.0:
        raise ValueError("d_n is undefined for c = 1")
    return -math.log(n) / ((1.0 - params.p) * math.log1p(-params.c))


def extinction_time_sample(x0, params, rng, t_cap):
    """One draw of tau from ``x0``; ``None`` if the path survives to ``t_cap``."""
    if t_cap < 1:
        raise ValueError("t_cap must be >= 1")
    keep = 1.0 - params.c
    x = int(x0)
    for t in range(1, t_cap + 1):
        if rng.random() < params.p:
            x += 1
        else:
            x = int(rng.binomial(x, keep)) if x else 0
            if x == 0:
                return t
    return None


def sample_extinction_times(x0, params, size, rng, t_cap):
    """Vectorised tau draws from ``x0``.

    Returns ``(times, censored)``; censored paths carry ``times == t_cap``.
    """
    keep = 1.0 - params.c
    times = np.full(size, t_cap, dtype=np.int64)
    censored = np.ones(size, dtype=bool)
    idx = np.arange(size)
    x = np.full(size, int(x0), dtype=np.int64)
    for t in range(1, t_cap + 1):
        if idx.size == 0:
            break
        birth = rng.random(idx.size) < params.p
        x = np.where(birth, x + 1, rng.binomial(x, keep))
        dead = x == 0
        if dead.any():
            times[idx[dead]] = t
            censored[idx[dead]] = False
            idx = idx[~dead]
            x = x[~dead]
    return times, censored


def pgf_tau_monte_carlo(n, s_values, params, n_paths, rng, t_cap=None):
    """Monte Carlo E_n[s^tau] with standard errors, one entry per s.

    Censored paths are scored as 0; the cap is chosen so that the resulting
    bias s^t_cap stays below 1e-15 unless ``t_cap`` is given.
    """
    s_values = np.atleast_1d(np.asarray(s_values, dtype=float))
    if t_cap is None:
        t_cap = int(math.ceil(math.log(1e-15) / math.log(s_values.max())))
    times, censored = sample_extinction_times(n, params, n_paths, rng, t_cap)
    out = []
    for s in s_values:
        vals = np.where(censored, 0.0, s ** times.astype(float))
        out.append((float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_paths))))
    return out


def mean_extinction_time_mc(params, n_paths, rng, t_cap):
    """Monte Carlo E_0[tau]: (mean, standard error, censored count)."""
    times, censored = sample_extinction_times(0, params, n_paths, rng, t_cap)
    return float(times.mean()), float(times.std(ddof=1) / math.sqrt(n_paths)), int(censored.sum())


def survival_log_slope(times, censored, t_lo, t_hi):
    """Least-squares fit of ln P(tau > t) on [t_lo, t_hi].

    Returns ``(slope, intercept, r_squared)`` from the empirical survival
    function (censored draws count as survivors).
    """
    times = np.asarray(times)
    ts = np.arange(t_lo, t_hi + 1)
    sorted_t = np.sort(np.where(censored, np.iinfo(np.int64).max, times))
    surv = 1.0 - np.searchsorted(sorted_t, ts, side="right") / times.size
    keep = surv > 0
    ts, y = ts[keep], np.log(surv[keep])
    slope, intercept = np.polyfit(ts, y, 1)
    fitted = slope * ts + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return float(slope), float(intercept), 1.0 - ss_res / ss_tot


@dataclass
class ScalingRow:
    n: int
    dn: float
    xi: np.ndarray
    tau: np.ndarray
    censored: int = 0
    quantile_levels: tuple = field(default=(0.1, 0.25, 0.5, 0.75, 0.9))

    @property
    def rho(self):
        return self.tau - self.xi

    def xi_quantiles(self):
        return np.quantile(self.xi / self.dn, self.quantile_levels)

    def tau_quantiles(self):
        return np.quantile(self.tau / self.dn, self.quantile_levels)


def coupled_extinction(n, params, reps, rng, t_cap=10**6):
    """Gap-vanishing time xi and extinction time tau of the copy started at n.

    The copy from n is X^(0) + H with X^(0) started at 0 and H the coupling
    gap; tau is the first zero of X^(0) at or after xi.
    """
    keep = 1.0 - params.c
    xi = np.full(reps, -1, dtype=np.int64)
    tau = np.full(reps, -1, dtype=np.int64)
    idx = np.arange(reps)
    x = np.zeros(reps, dtype=np.int64)
    h = np.full(reps, int(n), dtype=np.int64)
    for t in range(1, t_cap + 1):
        if idx.size == 0:
            break
        birth = rng.random(idx.size) < params.p
        x = np.where(birth, x + 1, rng.binomial(x, keep))
        h = np.where(birth, h, rng.binomial(h, keep))
        sub = idx
        new_xi = (h == 0) & (xi[sub] < 0)
        xi[sub[new_xi]] = t
        done = (h == 0) & (x == 0)
        tau[sub[done]] = t
        idx, x, h = sub[~done], x[~done], h[~done]
    censored = int((tau < 0).sum())
    return xi, tau, censored


def tau_scaling_experiment(params, ns, reps, rng, t_cap=10**6):
    rows = []
    for n in ns:
        if n < 2:
            raise ValueError("each n must be >= 2")
        xi, tau, censored = coupled_extinction(n, params, reps, rng, t_cap)
        rows.append(ScalingRow(int(n), dn_scale(n, params), xi, tau, censored))
    return rows


def empirical_tv(a, b):
    """TV distance between the empirical laws of two integer samples."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    top = int(max(a.max(), b.max())) + 1
    fa = np.bincount(a, minlength=top) / a.size
    fb = np.bincount(b, minlength=top) / b.size
    return 0.5 * float(np.abs(fa - fb).sum())
