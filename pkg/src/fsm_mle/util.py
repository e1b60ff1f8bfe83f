"""Small shared helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads: int | None) -> int:
    """CLI --threads value, falling back to FSM_MLE_THREADS, then 1."""
    if threads is not None:
        return max(1, threads)
    env = os.environ.get("FSM_MLE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def make_parallel_map(threads: int):
    """Ordered map over a bounded worker pool; sequential when threads == 1.

    Results are collected in input order, so per-item seeding keeps output
    deterministic regardless of scheduling.
    """
    if threads <= 1:
        return lambda fn, items: list(map(fn, items))

    def pmap(fn, items):
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))

    return pmap
