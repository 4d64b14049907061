"""Process-wide worker pool.

Work is always split into the same fixed list of tasks, whatever the worker
count, and results are combined in task order. BLAS is pinned to one thread so
that each task is computed identically no matter which worker runs it; this is
what makes outputs bit-identical across thread counts.
"""

import os
from concurrent.futures import ThreadPoolExecutor

from threadpoolctl import threadpool_limits

_num_threads = 1
_pool = None
_blas_limiter = None


def _available_cpus():
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def _pin_blas():
    global _blas_limiter
    if _blas_limiter is None:
        _blas_limiter = threadpool_limits(limits=1, user_api="blas")


def set_num_threads(n):
    """Set the number of workers used by :func:`run_tasks` (``n >= 1``)."""
    global _num_threads, _pool
    n = int(n)
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    if n != _num_threads and _pool is not None:
        _pool.shutdown(wait=True)
        _pool = None
    _num_threads = n


def get_num_threads():
    return _num_threads


def default_num_threads():
    return _available_cpus()


def run_tasks(fn, tasks):
    """Apply ``fn`` to every task and return the results in task order."""
    global _pool
    _pin_blas()
    tasks = list(tasks)
    if _num_threads == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    if _pool is None:
        _pool = ThreadPoolExecutor(max_workers=_num_threads)
    return list(_pool.map(fn, tasks))


class threads:
    """Context manager that temporarily changes the worker count."""

    def __init__(self, n):
        self.n = n
        self.prev = None

    def __enter__(self):
        self.prev = get_num_threads()
        set_num_threads(self.n)
        return self

    def __exit__(self, *exc):
        set_num_threads(self.prev)
        return False
