"""Time the numba kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--repeat R]``.  Each kernel is
called once on both backends before timing so JIT compilation is excluded.
"""

import argparse
import timeit

import numpy as np

from cocyclelab import _kernels


def make_inputs(paths, n, seed=0):
    rng = np.random.default_rng(seed)
    mats = np.ascontiguousarray(rng.normal(size=(4, 2, 2)) + 1.5 * np.eye(2))
    symbols = rng.integers(0, 4, size=(paths, n)).astype(np.int64)
    theta = np.linspace(0, np.pi, 32, endpoint=False)
    vecs = np.ascontiguousarray(np.column_stack([np.cos(theta), np.sin(theta)]))
    v = rng.normal(size=(paths // 10, n))
    w2 = rng.uniform(0.5, 2.0, size=(paths // 10, n - 1))
    energies = np.linspace(-4, 4, 64)
    starts = np.arange(0, n, 50, dtype=np.int64)
    lengths = np.full(len(starts), 50, dtype=np.int64)
    return {
        "log_norm_products": (mats, symbols),
        "vector_log_norms": (mats, symbols, vecs),
        "cone_walk": (mats, symbols, np.array([0.6, 0.8]), np.array([1.0, 0.0]),
                      np.array([0.0, 1.0]), 2.0, 0.5),
        "sturm_counts": (v, w2, energies),
        "block_products": (mats, symbols, starts, lengths),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=2000)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if _kernels.NUMBA is None:
        raise SystemExit("numba is not installed")
    inputs = make_inputs(args.paths, args.n)
    print(f"{'kernel':<20}{'numpy s':>12}{'numba s':>12}{'speedup':>10}")
    for name, a in inputs.items():
        _kernels.NUMPY[name](*a)
        _kernels.NUMBA[name](*a)
        t_np = min(timeit.repeat(lambda: _kernels.NUMPY[name](*a), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: _kernels.NUMBA[name](*a), number=1, repeat=args.repeat))
        print(f"{name:<20}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
