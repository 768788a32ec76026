"""Model parameters and single-path simulation of the catastrophe walk.

At each step the population either gains one individual (probability ``p``)
or suffers a binomial catastrophe in which every individual independently
dies with probability ``c``.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Birth probability ``p`` in (0, 1) and per-individual kill probability ``c`` in (0, 1]."""

    p: float
    c: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if not 0.0 < self.c <= 1.0:
            raise ValueError(f"c must lie in (0, 1], got {self.c}")

    def alpha(self):
        """Per-step probability that a fixed individual is not killed: 1 - c(1 - p)."""
        return 1.0 - self.c * (1.0 - self.p)

    def tilted_p(self):
        return self.p / self.alpha()

    def tilted(self):
        """Parameters of the tilted chain (birth probability p / alpha).

        Raises ValueError when c = 1, where the tilt degenerates to p = 1.
        """
        pt = self.tilted_p()
        if pt >= 1.0:
            raise ValueError("tilted chain is improper for c = 1")
        return ModelParams(pt, self.c)

    def mean(self):
        """Stationary mean p / (c (1 - p))."""
        return self.p / (self.c * (1.0 - self.p))


@dataclass
class Trajectory:
    states: np.ndarray
    seed: object = field(default=None)

    def __len__(self):
        return len(self.states)


def transition_prob(i, j, params):
    """One-step kernel entry P(X_{t+1} = j | X_t = i)."""
    p, c = params.p, params.c
    if i < 0 or j < 0:
        return 0.0
    out = p if j == i + 1 else 0.0
    if j <= i:
        # c = 1 leaves only j = 0; avoid 0.0 ** 0 ambiguity by hand
        if c == 1.0:
            out += (1.0 - p) if j == 0 else 0.0
        else:
            out += (1.0 - p) * comb(i, j) * (1.0 - c) ** j * c ** (i - j)
    return out


def step_sample(x, params, rng):
    if rng.random() < params.p:
        return x + 1
    if x == 0:
        return 0
    return int(rng.binomial(x, 1.0 - params.c))


def drift(x, params):
    """Expected one-step increment E[X_{t+1} - X_t | X_t = x]."""
    return params.p - (1.0 - params.p) * params.c * x


def hit_zero_prob(x, params):
    return (1.0 - params.p) * params.c ** x


def simulate_trajectory(x0, steps, params, rng, seed=None):
    """Simulate ``steps`` transitions from ``x0``.

    Births are drawn up front as one coin vector; binomial draws only happen at
    catastrophes, so the law matches ``step_sample`` applied repeatedly.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    births = rng.random(steps) < params.p
    keep = 1.0 - params.c
    states = np.empty(steps + 1, dtype=np.int64)
    x = int(x0)
    states[0] = x
    for t in range(steps):
        if births[t]:
            x += 1
        elif x:
            x = int(rng.binomial(x, keep))
        states[t + 1] = x
    return Trajectory(states, seed)
