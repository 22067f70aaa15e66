"""Seed derivation and replica fan-out.

Replica ``i`` of a run with master seed ``s`` always gets the stream
``SeedSequence([s, *tags, i])``, so results do not depend on worker count or
scheduling order.
"""
from __future__ import annotations

import os
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed


def replica_seed(master_seed: int, index: int, *tags: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), *[int(t) for t in tags], int(index)])


def resolve_jobs(n_jobs: int | None) -> int:
    if n_jobs is None or n_jobs == 0:
        return 1
    if n_jobs < 0:
        return max(1, (os.cpu_count() or 1) + 1 + n_jobs)
    return n_jobs


def run_replicas(fn: Callable, args: Sequence[tuple], n_jobs: int | None = 1) -> list:
    """Evaluate ``fn(*a)`` for every ``a`` in ``args``, preserving order."""
    jobs = resolve_jobs(n_jobs)
    if jobs == 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    return Parallel(n_jobs=jobs)(delayed(fn)(*a) for a in args)


def uniform_chunks(rng: np.random.Generator, first: int = 256, largest: int = 1 << 16):
    """Endless stream of uniform blocks with doubling size (deterministic per rng)."""
    n = first
    while True:
        yield rng.random(n)
        n = min(2 * n, largest)
