"""Kernel backend selection.

The compiled Cython extension is preferred; the numpy backend is the
fallback. DSG_PURE_PYTHON=1 forces the fallback (useful for debugging
and for the backend-equivalence tests and benchmarks).
"""

import os

from . import pyback

if os.environ.get("DSG_PURE_PYTHON") == "1":
    _impl = pyback
else:
    try:
        from . import _ckern as _impl
    except ImportError:
        _impl = pyback

BACKEND = "numpy" if _impl is pyback else "cython"

similarity_edges = _impl.similarity_edges
nearest_neighbors = _impl.nearest_neighbors

__all__ = ["BACKEND", "similarity_edges", "nearest_neighbors", "pyback"]
