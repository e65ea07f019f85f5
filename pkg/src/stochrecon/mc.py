"""Deterministic block-parallel Monte Carlo.

Paths are split into fixed-size blocks; block ``b`` draws from the ``b``-th
child of ``SeedSequence(seed)``.  Results are concatenated in block order,
so they do not depend on the number of workers.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_BLOCK = 250


def block_sizes(n_paths, block=DEFAULT_BLOCK):
    full, rest = divmod(int(n_paths), int(block))
    return [block] * full + ([rest] if rest else [])


def block_seeds(seed, n_blocks):
    return np.random.SeedSequence(seed).spawn(n_blocks)


def map_blocks(fn, n_paths, seed, block=DEFAULT_BLOCK, workers=1):
    """Run ``fn(rng, count, index)`` per block and return the results in order."""
    sizes = block_sizes(n_paths, block)
    seeds = block_seeds(seed, len(sizes))
    jobs = [(np.random.default_rng(s), c, i) for i, (s, c) in enumerate(zip(seeds, sizes))]
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def concat(results, key=None, axis=0):
    """Concatenate per-block arrays (or a dict entry) along the path axis."""
    if key is not None:
        results = [r[key] for r in results]
    return np.concatenate([np.asarray(r) for r in results], axis=axis)


def lp_norm(samples, p=2, axis=0):
    return np.mean(np.abs(samples) ** p, axis=axis) ** (1.0 / p)


def mean_se(samples, axis=0):
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[axis]
    return samples.mean(axis=axis), samples.std(axis=axis, ddof=1) / np.sqrt(n)
