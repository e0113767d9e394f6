"""
Worker-pool helper. The CLI owns the thread budget; modules only pass it through.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)

DEFAULT_THREADS = 1


def map_parallel(func: Callable[[T], R], items: Iterable[T], threads: int = DEFAULT_THREADS) -> List[R]:
    """Apply ``func`` to every item, preserving order; serial when ``threads <= 1``."""

    work = list(items)
    if threads <= 1 or len(work) <= 1:
        return [func(item) for item in work]
    workers = min(threads, len(work))
    logger.debug("mapping %d items over %d threads", len(work), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, work))


def chunked(count: int, size: int) -> List[slice]:
    size = max(1, int(size))
    return [slice(start, min(start + size, count)) for start in range(0, count, size)]
