# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for pairwise-similarity edge construction and
nearest-neighbor search. Mirrors kernels/pyback.py.

Above a size cutoff the dot products are delegated to BLAS (through
numpy) and only the branchy extraction work runs as fused C loops;
below it, plain loops win by skipping temporaries and call overhead.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

# pure-loop path is faster than a BLAS round trip below this many cells
DEF SMALL_LIMIT = 1024


def similarity_edges(feats, tau):
    """Upper-triangular positive dot-product edges above a threshold.

    Same contract as pyback.similarity_edges; the extraction pass never
    materializes index or mask temporaries.
    """
    cdef double[:, ::1] f = np.ascontiguousarray(feats, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t d = f.shape[1]
    cdef double cut = tau if tau > 0.0 else 0.0

    us = np.empty(n * (n - 1) // 2, dtype=np.int64)
    vs = np.empty(n * (n - 1) // 2, dtype=np.int64)
    ws = np.empty(n * (n - 1) // 2, dtype=np.float64)
    cdef long long[::1] uv = us
    cdef long long[::1] vv = vs
    cdef double[::1] wv = ws

    cdef Py_ssize_t i, j, k, m = 0
    cdef double s
    cdef double[:, ::1] sims

    if n * d <= SMALL_LIMIT:
        with nogil:
            for i in range(n):
                for j in range(i + 1, n):
                    s = 0.0
                    for k in range(d):
                        s += f[i, k] * f[j, k]
                    if s > cut:
                        uv[m] = i
                        vv[m] = j
                        wv[m] = s
                        m += 1
    else:
        sims = np.asarray(f) @ np.asarray(f).T
        with nogil:
            for i in range(n):
                for j in range(i + 1, n):
                    s = sims[i, j]
                    if s > cut:
                        uv[m] = i
                        vv[m] = j
                        wv[m] = s
                        m += 1
    return us[:m], vs[:m], ws[:m]


def nearest_neighbors(feat_a, feat_b):
    """Row-wise nearest neighbor of feat_a in feat_b by dot product."""
    cdef double[:, ::1] a = np.ascontiguousarray(feat_a, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(feat_b, dtype=np.float64)
    cdef Py_ssize_t na = a.shape[0]
    cdef Py_ssize_t nb = b.shape[0]
    cdef Py_ssize_t d = a.shape[1]

    idx = np.empty(na, dtype=np.int64)
    best = np.empty(na, dtype=np.float64)
    cdef long long[::1] iv = idx
    cdef double[::1] bv = best

    cdef Py_ssize_t i, j, k, arg
    cdef double s, top
    cdef double[:, ::1] sims

    if (na + nb) * d <= SMALL_LIMIT:
        with nogil:
            for i in range(na):
                arg = 0
                top = -1e300
                for j in range(nb):
                    s = 0.0
                    for k in range(d):
                        s += a[i, k] * b[j, k]
                    if s > top:
                        top = s
                        arg = j
                iv[i] = arg
                bv[i] = top
    else:
        sims = np.asarray(a) @ np.asarray(b).T
        with nogil:
            for i in range(na):
                arg = 0
                top = -1e300
                for j in range(nb):
                    s = sims[i, j]
                    if s > top:
                        top = s
                        arg = j
                iv[i] = arg
                bv[i] = top
    return idx, best
