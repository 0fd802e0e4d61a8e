"""Ordered worker pool for per-chunk ensemble tasks.

Chunks are fixed by the seed list and the grid size, never by the number of
workers, and results are reduced in chunk order.  Outputs are therefore
identical for every ``threads`` value.
"""

import os
from concurrent.futures import ThreadPoolExecutor

# float64 elements per chunk for path storage; ~128 MB per prefix array
CHUNK_BUDGET = 2 ** 24
MAX_CHUNK = 256


def default_threads():
    return os.cpu_count() or 1


def chunk_size(n_nodes):
    size = max(1, CHUNK_BUDGET // max(int(n_nodes), 1))
    return max(1, min(MAX_CHUNK, size))


def chunks(items, size):
    items = list(items)
    return [items[i:i + size] for i in range(0, len(items), size)]


def map_ordered(fn, tasks, threads=1):
    """``[fn(t) for t in tasks]``, optionally spread over a thread pool."""
    tasks = list(tasks)
    if threads is None:
        threads = default_threads()
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))
