"""Order-preserving parallel map used by the sample-grid stages."""

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "SKEWFATOU_THREADS"


def resolve_threads(threads=None):
    if threads is None:
        threads = os.environ.get(ENV_THREADS, "1")
    try:
        threads = int(threads)
    except (TypeError, ValueError):
        threads = 1
    return max(1, threads)


def pmap(fn, items, threads=None):
    """``[fn(x) for x in items]``, evaluated on up to ``threads`` workers.

    Results come back in input order, so output never depends on scheduling.
    """
    items = list(items)
    n = resolve_threads(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
