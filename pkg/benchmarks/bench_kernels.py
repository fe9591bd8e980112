#!/usr/bin/env python3
"""Benchmark the jitted kernels against the pure-numpy fallbacks.

Run from the repo root:

    python3 benchmarks/bench_kernels.py

The same fallback path can be forced package-wide with VIDADAPT_NUMBA=0.
"""

import time

import numpy as np

from vidadapt import _kernels


def timeit(fn, *args, repeats=7):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def bench_features(size):
    rng = np.random.default_rng(0)
    img = np.ascontiguousarray(rng.random((size, size, 3)))
    t_np, ref = timeit(_kernels.extract_features_numpy, img)
    row = [f"features {size}x{size}".ljust(22), f"{t_np * 1e3:8.2f}"]
    if _kernels.NUMBA_ENABLED:
        _kernels.extract_features_jit(img)  # compile outside the timing
        t_jit, out = timeit(_kernels.extract_features_jit, img)
        assert np.array_equal(ref, out), "kernel paths disagree"
        row += [f"{t_jit * 1e3:8.2f}", f"{t_np / t_jit:6.1f}x"]
    else:
        row += ["      --", "    --"]
    print(" | ".join(row))


def bench_block_match(size):
    rng = np.random.default_rng(1)
    a = rng.random((size, size))
    b = np.roll(a, 3, axis=1)
    prior = np.zeros((size, size))
    t_np, ref = timeit(_kernels.block_match_numpy, a, b, prior, prior, 8, 4)
    row = [f"block match {size}x{size}".ljust(22), f"{t_np * 1e3:8.2f}"]
    if _kernels.NUMBA_ENABLED:
        _kernels.block_match_jit(a, b, prior, prior, 8, 4)
        t_jit, out = timeit(_kernels.block_match_jit, a, b, prior, prior, 8, 4)
        assert np.array_equal(ref[0], out[0]) and np.array_equal(ref[1], out[1])
        row += [f"{t_jit * 1e3:8.2f}", f"{t_np / t_jit:6.1f}x"]
    else:
        row += ["      --", "    --"]
    print(" | ".join(row))


def main():
    print("numba enabled:", _kernels.NUMBA_ENABLED)
    print(f"{'kernel':<22} | {'numpy ms':>8} | {'numba ms':>8} | {'speedup':>6}")
    print("-" * 56)
    for size in (64, 128, 256):
        bench_features(size)
    for size in (64, 128, 256):
        bench_block_match(size)


if __name__ == "__main__":
    main()
