import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from django.conf import settings

logger = logging.getLogger(__name__)

BLOCK_SIZE = 4096


def worker_count(threads=None):
    """Explicit ``threads``, else DI4C_THREADS, else 1"""
    if threads is None:
        threads = getattr(settings, 'DI4C_THREADS', 1) if settings.configured else 1
    return max(1, int(threads))


def parallel_map(fn, items, threads=None):
    """Ordered map, fanned out over a thread pool when more than one worker is allowed"""
    items = list(items)
    workers = min(worker_count(threads), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chain_blocks(count, seed, block_size=BLOCK_SIZE):
    """(size, Generator) per block; streams depend on the seed and block index only"""
    if count <= 0:
        return []
    sizes = [min(block_size, count - start) for start in range(0, count, block_size)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    return [(size, np.random.default_rng(stream)) for size, stream in zip(sizes, streams)]
