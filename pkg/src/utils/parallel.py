"""
Deterministic worker pool.

ordered_map runs independent work items on a process pool and returns results
in submission order, so callers see the same sequence for any worker count.
Work functions must be module-level; the read-only state they need (grid,
scene, parameters) is handed to each worker once through the pool initializer
and passed as leading arguments on every call.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Any, Callable, Iterable, List, Tuple, TypeVar

logger = logging.getLogger("pc-raylauncher.parallel")

T = TypeVar("T")
R = TypeVar("R")

_shared: Tuple[Any, ...] = ()


def _install_shared(shared: Tuple[Any, ...]) -> None:
    global _shared
    _shared = shared


def _call_with_shared(func: Callable[..., R], item) -> R:
    return func(*_shared, item)


def ordered_map(
    func: Callable[..., R],
    items: Iterable[T],
    workers: int = 1,
    shared: Tuple[Any, ...] = (),
) -> List[R]:
    """Return [func(*shared, item) for item in items], computed on `workers` processes."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(*shared, item) for item in items]
    workers = min(workers, len(items))
    chunk = max(1, len(items) // (workers * 8))
    logger.debug(f"Mapping {getattr(func, '__name__', func)} over {len(items)} items on {workers} processes")
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_install_shared, initargs=(shared,)
    ) as executor:
        return list(executor.map(partial(_call_with_shared, func), items, chunksize=chunk))
