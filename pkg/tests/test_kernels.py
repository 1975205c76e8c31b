"""Backend equivalence: the compiled kernels and the numpy fallback must
agree on indices exactly and on weights to float tolerance."""

import numpy as np
import pytest

from dsgtk import kernels
from dsgtk.kernels import pyback


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("tau", [0.0, 0.3, 0.9])
def test_similarity_edges_backends_agree(seed, tau):
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((20, 8))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    u1, v1, w1 = kernels.similarity_edges(feats, tau)
    u2, v2, w2 = pyback.similarity_edges(feats, tau)
    assert np.array_equal(u1, u2) and np.array_equal(v1, v2)
    np.testing.assert_allclose(w1, w2, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_nearest_neighbors_backends_agree(seed):
    rng = np.random.default_rng(100 + seed)
    a = rng.standard_normal((15, 6))
    b = rng.standard_normal((12, 6))
    i1, s1 = kernels.nearest_neighbors(a, b)
    i2, s2 = pyback.nearest_neighbors(a, b)
    assert np.array_equal(i1, i2)
    np.testing.assert_allclose(s1, s2, atol=1e-12)


def test_similarity_edges_structure():
    feats = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    u, v, w = kernels.similarity_edges(feats, 0.0)
    assert list(zip(u.tolist(), v.tolist())) == [(0, 1)]
    assert w[0] == pytest.approx(1.0)
    assert (u < v).all()


def test_negative_tau_still_drops_nonpositive_dots():
    feats = np.array([[1.0, 0.0], [-1.0, 0.0]])
    u, v, w = kernels.similarity_edges(feats, -5.0)
    assert len(w) == 0  # dot = -1 is not > 0


def test_nearest_neighbor_tie_breaks_low_index():
    a = np.array([[1.0, 0.0]])
    b = np.array([[1.0, 0.0], [1.0, 0.0]])
    idx, _ = kernels.nearest_neighbors(a, b)
    idx2, _ = pyback.nearest_neighbors(a, b)
    assert idx[0] == 0 and idx2[0] == 0


def test_backend_identifies_itself():
    assert kernels.BACKEND in ("cython", "numpy")
