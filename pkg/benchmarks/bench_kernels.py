#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure numpy fallbacks.

Run:  python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from chromaflow import _kernels
from chromaflow.motion import _search_offsets, estimate_flow


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_block_search(impl, size, repeats):
    rng = np.random.default_rng(0)
    ref = rng.uniform(0, 1, (size, size))
    mov = np.roll(ref, shift=(3, -2), axis=(0, 1))
    grid = np.arange(0, size - 7, 8, dtype=np.int64)
    base = np.zeros((len(grid), len(grid)), dtype=np.int64)
    offsets = _search_offsets(4)
    return _time(lambda: impl.block_search(ref, mov, base, base, offsets, 8, grid, grid), repeats)


def bench_splat(impl, size, repeats):
    rng = np.random.default_rng(0)
    gray = rng.uniform(0, 1, (size, size))
    a = rng.uniform(-1, 1, (size, size))
    b = rng.uniform(-1, 1, (size, size))
    return _time(lambda: impl.splat_hist(gray, a, b, 8, 8, 16, 16), repeats)


def bench_full_flow(backend, size, repeats):
    rng = np.random.default_rng(0)
    src = rng.uniform(0, 1, (size, size))
    dst = np.roll(src, shift=(3, -2), axis=(0, 1))
    return _time(lambda: estimate_flow(src, dst, backend=backend), repeats)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not _kernels.HAVE_NATIVE:
        try:
            _kernels.get_impl("native")
        except ImportError:
            print("native kernels not built; install with `pip install -e . --no-build-isolation`")
            return 1

    numpy_impl = _kernels.get_impl("numpy")
    native_impl = _kernels.get_impl("native")

    rows = []
    for size in (64, 128, 256):
        t_np = bench_block_search(numpy_impl, size, args.repeats)
        t_nat = bench_block_search(native_impl, size, args.repeats)
        rows.append((f"block_search {size}x{size}", t_np, t_nat))
    for size in (64, 128, 256):
        t_np = bench_splat(numpy_impl, size, args.repeats)
        t_nat = bench_splat(native_impl, size, args.repeats)
        rows.append((f"splat_hist {size}x{size}", t_np, t_nat))
    for size in (64, 256):
        t_np = bench_full_flow("numpy", size, args.repeats)
        t_nat = bench_full_flow("native", size, args.repeats)
        rows.append((f"estimate_flow {size}x{size}", t_np, t_nat))

    print(f"{'kernel':<24} {'numpy':>10} {'native':>10} {'speedup':>8}")
    print("-" * 56)
    for name, t_np, t_nat in rows:
        print(f"{name:<24} {t_np * 1e3:>8.2f}ms {t_nat * 1e3:>8.2f}ms {t_np / t_nat:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
