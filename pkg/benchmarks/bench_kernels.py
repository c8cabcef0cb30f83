"""Benchmark the numba kernels against the pure-numpy fallback.

Run as: python3 benchmarks/bench_kernels.py [--size N] [--repeats K]

Imports both backend modules directly so the EMBRYO_ALIGN_NO_NUMBA flag
is irrelevant here.
"""

import argparse
import time

import numpy as np

from embryo_align import _kernels_numpy


def _timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_affine(impl, size, repeats):
    rng = np.random.default_rng(7)
    src = rng.random((size, size, size), dtype=np.float32)
    theta = 0.4
    rot = np.array([
        [np.cos(theta), -np.sin(theta), 0.0],
        [np.sin(theta), np.cos(theta), 0.0],
        [0.0, 0.0, 1.0],
    ])
    c = (size - 1) / 2.0
    offset = np.full(3, c) - rot @ np.full(3, c)
    impl.affine_trilinear(src, rot, offset, (size, size, size))
    return _timeit(
        lambda: impl.affine_trilinear(src, rot, offset, (size, size, size)),
        repeats)


def bench_split(impl, repeats):
    rng = np.random.default_rng(11)
    n, d = 4000, 256
    x = rng.random((n, d), dtype=np.float32)
    y = (x[:, 3] > 0.5).astype(np.uint8)
    idx = np.arange(n, dtype=np.int64)
    feats = np.arange(d, dtype=np.int64)
    impl.best_split(x, y, idx, feats, 1)
    return _timeit(lambda: impl.best_split(x, y, idx, feats, 1), repeats)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=192)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = [("numpy", _kernels_numpy)]
    try:
        from embryo_align import _kernels_numba
        backends.append(("numba", _kernels_numba))
    except ImportError:
        print("numba backend unavailable, benchmarking numpy only")

    voxels = args.size ** 3
    rows = []
    for name, impl in backends:
        t_aff = bench_affine(impl, args.size, args.repeats)
        t_split = bench_split(impl, args.repeats)
        rows.append((name, t_aff, voxels / t_aff / 1e6, t_split))

    print(f"affine_trilinear on {args.size}^3 voxels, best of {args.repeats}:")
    print(f"{'backend':<8} {'affine s':>10} {'Mvox/s':>9} {'best_split s':>13}")
    for name, t_aff, rate, t_split in rows:
        print(f"{name:<8} {t_aff:>10.4f} {rate:>9.1f} {t_split:>13.4f}")
    if len(rows) == 2:
        print(f"speedup: affine {rows[0][1] / rows[1][1]:.2f}x, "
              f"best_split {rows[0][3] / rows[1][3]:.2f}x")


if __name__ == "__main__":
    main()
