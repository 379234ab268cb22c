"""Worker-pool plumbing.

The AADG_THREADS environment variable caps process parallelism everywhere in
the package; results are always collected in submission order so parallel and
serial execution produce identical outputs.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def worker_count(task_count: int | None = None) -> int:
    limit = os.cpu_count() or 1
    env = os.environ.get("AADG_THREADS")
    if env is not None:
        try:
            limit = min(limit, max(int(env), 1))
        except ValueError:
            raise ValueError(f"AADG_THREADS must be an integer, got {env!r}")
    if task_count is not None:
        limit = min(limit, task_count)
    return max(limit, 1)


def parallel_map(fn, items: list, max_workers: int | None = None) -> list:
    """Order-preserving map over items, fanned out to worker processes.

    `fn` and every item must be picklable.  Falls back to a plain loop when
    only one worker is allowed.
    """
    items = list(items)
    workers = worker_count(len(items)) if max_workers is None else max_workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
