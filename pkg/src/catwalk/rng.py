"""Seeded random streams.

Every Monte Carlo routine takes a ``numpy.random.Generator``. Streams for
parallel shards are derived from ``(base_seed, task_index)`` so that a run is
reproducible for a fixed seed and shard count, whatever the thread count.
The bit generator is Philox (counter based).
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def make_rng(seed, task_index=None):
    """Return a Philox-backed generator for ``seed`` (optionally a sub-stream).

    ``seed`` may be an int or a sequence of ints (a named sub-experiment).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    entropy = [int(v) for v in seed] if isinstance(seed, (list, tuple)) else [int(seed)]
    if task_index is not None:
        entropy.append(int(task_index))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def shard_sizes(total, n_shards):
    base, extra = divmod(int(total), int(n_shards))
    return [base + (1 if i < extra else 0) for i in range(n_shards)]


def run_shards(fn, total, seed, n_shards=8, threads=1):
    """Split ``total`` work items over ``n_shards`` seeded tasks.

    ``fn(size, rng)`` is called once per shard; results come back in shard
    order regardless of ``threads``.
    """
    sizes = shard_sizes(total, n_shards)
    rngs = [make_rng(seed, i) for i in range(n_shards)]
    if threads <= 1:
        return [fn(n, r) for n, r in zip(sizes, rngs)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, sizes, rngs))
