"""Seed splitting and a thread-capped ordered map."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "KLSLAB_THREADS"


def child_seed(master: int, index: int) -> np.random.SeedSequence:
    """Stream ``index`` of ``master``: ``SeedSequence([master, index])``."""
    return np.random.SeedSequence([int(master), int(index)])


def child_rng(master: int, index: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, index))


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def ordered_map(fn, items) -> list:
    """``[fn(x) for x in items]``, possibly threaded; results keep input order."""
    items = list(items)
    workers = min(thread_cap(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
