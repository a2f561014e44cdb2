"""Deterministic fan-out of per-sample work over an optional process pool."""
from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor

__all__ = ["map_indexed"]


def map_indexed(fn, args_list, workers=None):
    """Apply `fn` to every element, returning results in input order.

    With `workers` above 1 the work runs on a fork-based process pool; the
    output order is fixed by the input index either way, so results do not
    depend on the worker count as long as each element carries its own
    random stream.
    """
    items = list(args_list)
    if workers is None or workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    ctx = multiprocessing.get_context("fork")
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, items, chunksize=chunk))
