"""Seed derivation and chunked, order-stable parallel map.

Monte-Carlo work is cut into fixed-size chunks; chunk ``i`` always draws from
the generator derived from ``(seed, *key, i)``.  The worker count only changes
scheduling, never which numbers are drawn or how results are combined.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 512

_default_workers = [max(1, int(os.environ.get("COCYCLELAB_WORKERS", "1")))]


def set_workers(n):
    previous = _default_workers[0]
    _default_workers[0] = max(1, int(n))
    return previous


def get_workers(workers=None):
    return _default_workers[0] if workers is None else max(1, int(workers))


def derive_rng(seed, *key):
    """Independent generator for stream ``key`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def draw_symbols(rng, cdf, shape):
    """i.i.d. symbols with cumulative distribution ``cdf`` (last entry 1)."""
    u = rng.random(shape)
    sym = np.searchsorted(cdf, u, side="right")
    np.minimum(sym, len(cdf) - 1, out=sym)
    return sym.astype(np.int64)


def chunk_bounds(total, chunk=CHUNK):
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]


def map_chunks(fn, total, workers=None, chunk=CHUNK):
    """Call ``fn(index, lo, hi)`` for each chunk; results in chunk order."""
    bounds = chunk_bounds(total, chunk)
    w = get_workers(workers)
    if w == 1 or len(bounds) == 1:
        return [fn(i, lo, hi) for i, (lo, hi) in enumerate(bounds)]
    with ThreadPoolExecutor(max_workers=w) as pool:
        futures = [pool.submit(fn, i, lo, hi) for i, (lo, hi) in enumerate(bounds)]
        return [f.result() for f in futures]


def path_chunk_size(n, budget=1 << 21):
    return int(min(CHUNK, max(1, budget // max(int(n), 1))))


def map_path_chunks(fn, cdf, n, samples, seed, key=(), workers=None):
    """Draw ``samples`` i.i.d. length-``n`` paths chunk by chunk and apply ``fn``.

    ``fn`` receives the ``(rows, n)`` symbol array of one chunk; results come
    back in chunk order.
    """
    chunk = path_chunk_size(n)

    def run(i, lo, hi):
        rng = derive_rng(seed, *key, i)
        return fn(draw_symbols(rng, cdf, (hi - lo, n)))

    return map_chunks(run, samples, workers=workers, chunk=chunk)
