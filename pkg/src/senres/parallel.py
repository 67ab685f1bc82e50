"""Process fan-out for independent, deterministic work items."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ENV_WORKERS = "SENRES_WORKERS"


def default_workers() -> int:
    """Worker count from ``SENRES_WORKERS``, 1 when unset or invalid."""
    try:
        return max(1, int(os.environ.get(ENV_WORKERS, "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """Ordered ``map``; uses a process pool when ``workers > 1``.

    ``fn`` must be picklable (a module-level function or a partial of one).
    Results do not depend on the worker count.
    """
    items = list(items)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
