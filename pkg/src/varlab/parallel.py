"""Seeded, order-preserving fan-out for independent restarts."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

_JOBS = 1


def set_jobs(jobs: int) -> None:
    global _JOBS
    _JOBS = max(1, int(jobs))


def get_jobs() -> int:
    return _JOBS


def ordered_map(fn, items, jobs=None):
    """map() whose results come back in input order regardless of worker count."""
    items = list(items)
    jobs = _JOBS if jobs is None else max(1, int(jobs))
    if jobs == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Generator for one restart; independent of how many restarts are run."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)
