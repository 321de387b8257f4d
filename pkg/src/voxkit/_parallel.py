"""Worker-pool helper for per-sample batch drivers.

``workers <= 1`` runs inline; otherwise a process pool maps over the tasks.
Results always come back in task order so callers stay deterministic
regardless of worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(mp: str | int | None) -> int:
    """Interpret the CLI ``--mp`` value: absent -> 1, bare flag -> all cores."""
    if mp is None:
        return 1
    if isinstance(mp, str):
        mp = int(mp)
    if mp <= 0:
        return os.cpu_count() or 1
    return mp


def pmap(fn: Callable[[T], R], tasks: Sequence[T], workers: int = 1) -> list[R]:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
