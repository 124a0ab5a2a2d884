"""Process-wide worker cap and an order-preserving parallel map."""

import os
from concurrent.futures import ThreadPoolExecutor

_MAX_WORKERS = None


def set_max_workers(n):
    """Cap the number of worker threads used by every module (None resets)."""
    global _MAX_WORKERS
    if n is not None and n < 1:
        raise ValueError("worker count must be positive")
    _MAX_WORKERS = n


def max_workers():
    if _MAX_WORKERS is not None:
        return _MAX_WORKERS
    return max(1, os.cpu_count() or 1)


def ordered_map(fn, items, workers=None):
    """``[fn(x) for x in items]`` evaluated on a thread pool.

    Results come back in input order, so reductions over them do not depend
    on the worker count.
    """
    items = list(items)
    n = min(workers or max_workers(), max_workers(), max(len(items), 1))
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
