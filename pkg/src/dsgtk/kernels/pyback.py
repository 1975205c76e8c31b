"""Numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or explicitly disabled
via DSG_PURE_PYTHON=1. Semantics must match `_ckern` exactly (up to
floating-point summation order).
"""

import numpy as np


def similarity_edges(feats, tau):
    """Upper-triangular positive dot-product edges above a threshold.

    Args:
        feats: (n, d) float64 feature matrix, one row per node.
        tau: edges with dot product <= max(tau, 0) are dropped.

    Returns:
        (u, v, w): int64 source/target index arrays with u < v and a
        float64 weight array. Diagonal is always excluded.
    """
    feats = np.ascontiguousarray(feats, dtype=np.float64)
    cut = max(float(tau), 0.0)
    sims = feats @ feats.T
    iu, iv = np.triu_indices(feats.shape[0], k=1)
    w = sims[iu, iv]
    keep = w > cut
    return iu[keep].astype(np.int64), iv[keep].astype(np.int64), w[keep]


def nearest_neighbors(feat_a, feat_b):
    """Row-wise nearest neighbor of `feat_a` in `feat_b` by dot product.

    Ties broken toward the lowest index. Returns (indices, best_sims).
    """
    feat_a = np.ascontiguousarray(feat_a, dtype=np.float64)
    feat_b = np.ascontiguousarray(feat_b, dtype=np.float64)
    sims = feat_a @ feat_b.T
    idx = np.argmax(sims, axis=1).astype(np.int64)
    best = sims[np.arange(sims.shape[0]), idx]
    return idx, best
