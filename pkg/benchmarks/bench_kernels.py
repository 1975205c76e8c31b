#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Covers the two hot loops (pairwise similarity-edge construction and
nearest-neighbor search) at desk-scale and production-scale sizes.
Run from the repo root:

    python benchmarks/bench_kernels.py
"""

import argparse
import time

import numpy as np

from dsgtk import kernels
from dsgtk.kernels import pyback


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(repeats=5):
    if kernels.BACKEND != "cython":
        print("note: compiled backend unavailable; comparing numpy against itself")
    rng = np.random.default_rng(0)
    rows = []
    # (n patches, feature dim): small synthetic grids up to a 28x28 ViT grid
    for n, d in ((16, 32), (64, 64), (196, 384), (784, 768)):
        feats = rng.standard_normal((n, d))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        other = rng.standard_normal((n, d))
        other /= np.linalg.norm(other, axis=1, keepdims=True)

        t_edges_c = _time(lambda: kernels.similarity_edges(feats, 0.5), repeats)
        t_edges_py = _time(lambda: pyback.similarity_edges(feats, 0.5), repeats)
        t_nn_c = _time(lambda: kernels.nearest_neighbors(feats, other), repeats)
        t_nn_py = _time(lambda: pyback.nearest_neighbors(feats, other), repeats)
        rows.append((n, d, t_edges_c, t_edges_py, t_nn_c, t_nn_py))

    print(f"\nkernel backend: {kernels.BACKEND}")
    print(f"{'n':>5} {'d':>5} | {'edges ' + kernels.BACKEND:>14} {'edges numpy':>12} "
          f"{'ratio':>6} | {'nn ' + kernels.BACKEND:>11} {'nn numpy':>9} {'ratio':>6}")
    for n, d, ec, ep, nc, np_ in rows:
        print(f"{n:>5} {d:>5} | {ec * 1e3:>11.3f} ms {ep * 1e3:>9.3f} ms "
              f"{ep / ec:>6.2f} | {nc * 1e3:>8.3f} ms {np_ * 1e3:>6.3f} ms {np_ / nc:>6.2f}")
    print("\nratio > 1 means the compiled kernel is faster. The win comes from")
    print("fused threshold extraction (no index/mask temporaries) and from")
    print("skipping BLAS on tiny graphs; plain nearest-neighbor search is")
    print("already near-optimal in numpy, so that kernel sits at parity.")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    bench(repeats=args.repeats)
