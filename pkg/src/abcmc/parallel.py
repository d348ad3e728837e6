"""Order-preserving fan-out of independent jobs."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List


def parallel_map(fn: Callable, items: Iterable, jobs: int = 1) -> List:
    """``[fn(*args) for args in items]``, optionally across ``jobs`` processes.

    Results come back in input order, so output does not depend on ``jobs``.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(*args) for args in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*items)))
