"""Truncated probability mass functions on the non-negative integers.

A :class:`Pmf` stores the mass of states ``0..K`` explicitly and lumps the
rest into ``tail_mass``, mass whose location is unknown. Every operation
here treats that tail conservatively, so exact entries are always lower
bounds for the true probabilities and total-variation numbers come with a
rigorous error bar.
"""

import json
from dataclasses import dataclass
from collections import OrderedDict

import numpy as np
from scipy import special, stats

DEFAULT_EPS = 1e-12


@dataclass(frozen=True)
class SeriesResult:
    """Value of a truncated series or product with a bound on the neglected remainder."""

    value: float
    terms_used: int
    error_bound: float


@dataclass(frozen=True, eq=False)
class Pmf:
    probs: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a non-empty 1-D array")
        if np.any(probs < 0) or self.tail_mass < 0:
            raise ValueError("probabilities must be non-negative")
        probs = probs.copy()
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "tail_mass", float(self.tail_mass))

    def __len__(self):
        return self.probs.size

    def __getitem__(self, k):
        return float(self.probs[k]) if 0 <= k < self.probs.size else 0.0

    @property
    def support_max(self):
        return self.probs.size - 1

    def total(self):
        return float(self.probs.sum()) + self.tail_mass

    def mean(self):
        """Mean of the explicit part (a lower bound when tail_mass > 0)."""
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def pgf(self, s):
        """Generating function of the explicit part, evaluated by Horner's rule."""
        return float(np.polynomial.polynomial.polyval(s, self.probs))

    def argmax(self):
        return int(np.argmax(self.probs))

    def to_json(self):
        return json.dumps({"probs": self.probs.tolist(), "tail_mass": self.tail_mass})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(np.array(data["probs"], dtype=float), data["tail_mass"])


def fold_tail(probs, tail_mass, eps_trunc=DEFAULT_EPS):
    """Drop trailing entries into ``tail_mass`` while the total stays within budget.

    A single fold spends at most half of the remaining budget, so repeated
    operations (long evolutions) never run out of it. Trailing exact zeros are
    always removed.
    """
    probs = np.asarray(probs, dtype=float)
    nz = np.flatnonzero(probs)
    end = nz[-1] + 1 if nz.size else 1
    probs = probs[:end]
    budget = 0.5 * (eps_trunc - tail_mass)
    if budget > 0 and probs.size > 1:
        # rev_cum[i] = mass of the i+1 last entries
        rev_cum = np.cumsum(probs[::-1])
        n_fold = int(np.searchsorted(rev_cum, budget, side="right"))
        n_fold = min(n_fold, probs.size - 1)
        if n_fold:
            tail_mass += float(rev_cum[n_fold - 1])
            probs = probs[: probs.size - n_fold]
    return Pmf(probs, tail_mass)


def delta(x):
    probs = np.zeros(int(x) + 1)
    probs[-1] = 1.0
    return Pmf(probs, 0.0)


def shift(dist, k=1):
    return Pmf(np.concatenate([np.zeros(k), dist.probs]), dist.tail_mass)


_BLOCKS = OrderedDict()
_MAX_BLOCKS = 6


def _binomial_block(keep, size):
    """Matrix M[i, j] = P(Bin(i, keep) = j) for 0 <= i, j < size."""
    i = np.arange(size)[:, None]
    j = np.arange(size)[None, :]
    with np.errstate(all="ignore"):
        try:
            mat = stats.binom.pmf(j, i, keep)
        except OverflowError:
            # scipy gives up for keep within a few ulps of 0 or 1; log space is fine there
            log_c = special.gammaln(i + 1) - special.gammaln(j + 1) - special.gammaln(i - j + 1)
            mat = np.exp(log_c + special.xlogy(j, keep) + special.xlog1py(i - j, -keep))
    mat = np.nan_to_num(mat, nan=0.0)
    mat[j > i] = 0.0
    mat.setflags(write=False)
    return mat


def _binomial_rows(keep, size):
    """Leading ``size`` x ``size`` block of the thinning matrix, from a per-``keep`` cache."""
    keep = float(keep)
    mat = _BLOCKS.get(keep)
    if mat is None or mat.shape[0] < size:
        cap = max(64, -(-int(size * 1.25) // 64) * 64)
        mat = _binomial_block(keep, cap)
        _BLOCKS[keep] = mat
        while len(_BLOCKS) > _MAX_BLOCKS:
            _BLOCKS.popitem(last=False)
    _BLOCKS.move_to_end(keep)
    return mat[:size, :size]


def thin_probs(probs, keep):
    """Law of Bin(R, keep) for R with the (sub-)probability vector ``probs``."""
    probs = np.asarray(probs, dtype=float)
    if keep == 1.0:
        return probs.copy()
    if keep == 0.0:
        out = np.zeros(probs.size)
        out[0] = probs.sum()
        return out
    return probs @ _binomial_rows(keep, probs.size)


def binomial_thin(dist, eps, eps_trunc=DEFAULT_EPS):
    """Binomial thinning: each unit of ``dist`` is kept independently with probability ``eps``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    return fold_tail(thin_probs(dist.probs, eps), dist.tail_mass, eps_trunc)


def evolve_probs(probs, p, c):
    """One kernel step applied to a (sub-)probability vector."""
    out = np.zeros(probs.size + 1)
    out[1:] += p * probs
    out[: probs.size] += (1.0 - p) * thin_probs(probs, 1.0 - c)[: probs.size]
    return out


def evolve(dist, params, eps_trunc=DEFAULT_EPS):
    """Push ``dist`` one step through the transition kernel.

    Mass already in the tail stays there: its image under the kernel is an
    unknown sub-probability of the same total.
    """
    return fold_tail(evolve_probs(dist.probs, params.p, params.c), dist.tail_mass, eps_trunc)


def evolve_n(dist, params, steps, eps_trunc=DEFAULT_EPS):
    for _ in range(int(steps)):
        dist = evolve(dist, params, eps_trunc)
    return dist


def convolve(a, b, eps_trunc=DEFAULT_EPS):
    """Law of the independent sum; tail masses add."""
    return fold_tail(np.convolve(a.probs, b.probs), a.tail_mass + b.tail_mass, eps_trunc)


def geom_minus(alpha, eps_trunc=DEFAULT_EPS):
    """Geom^-(alpha): pmf (1 - alpha)^k alpha on k = 0, 1, ..., tail below ``eps_trunc``."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    q = 1.0 - alpha
    if q == 0.0:
        return delta(0)
    # tail beyond K is q^(K+1)
    k_max = max(0, int(np.ceil(np.log(eps_trunc) / np.log(q))) - 1)
    while q ** (k_max + 1) >= eps_trunc:
        k_max += 1
    k = np.arange(k_max + 1)
    probs = alpha * q**k
    return Pmf(probs, q ** (k_max + 1))


def poisson(beta, eps_trunc=DEFAULT_EPS):
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if beta == 0:
        return delta(0)
    k_max = int(stats.poisson.isf(eps_trunc / 2, beta)) + 1
    while stats.poisson.sf(k_max, beta) >= eps_trunc:
        k_max += 1
    probs = stats.poisson.pmf(np.arange(k_max + 1), beta)
    return Pmf(probs, float(stats.poisson.sf(k_max, beta)))


def tv_distance(a, b):
    """Half-L1 distance of the explicit parts, with the truncation error bound.

    The true distance lies within ``err`` of ``value``.
    """
    n = max(a.probs.size, b.probs.size)
    pa = np.zeros(n)
    pb = np.zeros(n)
    pa[: a.probs.size] = a.probs
    pb[: b.probs.size] = b.probs
    value = 0.5 * float(np.abs(pa - pb).sum())
    return value, 0.5 * (a.tail_mass + b.tail_mass)
