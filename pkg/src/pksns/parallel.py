"""Ordered parallel map over independent tasks."""

from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, items, workers=1):
    """``[fn(x) for x in items]``, optionally on a process pool.

    Results come back in input order regardless of completion order, so
    outputs assembled from them are deterministic.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
