"""Clustering objectives against brute-force oracles, pooling algebra,
and permutation invariances."""

import itertools

import numpy as np
import pytest

from dsgtk.clustering import (
    ClusterAssignment,
    ClusteringHead,
    assign_clusters,
    dmon_loss,
    mincut_loss,
    pool_graph,
    scene_graph_to_dot,
    scene_graph_to_json,
)
from dsgtk.errors import DSGError
from dsgtk.graphs import DynamicGraph


def brute_force_modularity(a: np.ndarray, communities) -> float:
    """Textbook modularity: sum over communities of intra-edge fraction
    minus the degree-based null expectation."""
    two_m = a.sum()
    q = 0.0
    for members in communities:
        members = list(members)
        sub = a[np.ix_(members, members)]
        degree_sum = a[members].sum()
        q += sub.sum() / two_m - (degree_sum / two_m) ** 2
    return q


def hard_assignment(labels, k) -> ClusterAssignment:
    labels = np.asarray(labels)
    c = np.zeros((labels.size, k))
    c[np.arange(labels.size), labels] = 1.0
    return ClusterAssignment(C=c, K=k)


def two_triangles():
    a = np.zeros((6, 6))
    for block in (range(3), range(3, 6)):
        for i, j in itertools.combinations(block, 2):
            a[i, j] = a[j, i] = 1.0
    return a


def graph_from_adjacency(a, d=4, seed=0):
    rng = np.random.default_rng(seed)
    n = a.shape[0]
    iu, iv = np.triu_indices(n, k=1)
    keep = a[iu, iv] > 0
    spatial = np.column_stack([iu[keep], iv[keep], a[iu, iv][keep]])
    return DynamicGraph(
        w=1, n=n, d=d, node_features=rng.standard_normal((n, d)),
        spatial_edges=spatial, temporal_edges=np.zeros((0, 3)),
    )


def test_two_triangles_modularity_anchor():
    g = graph_from_adjacency(two_triangles())
    c = hard_assignment([0, 0, 0, 1, 1, 1], 2)
    loss = dmon_loss(c, g)
    assert loss.modularity_term == pytest.approx(-0.5, abs=1e-10)


def test_two_triangles_mincut_anchor():
    g = graph_from_adjacency(two_triangles())
    c = hard_assignment([0, 0, 0, 1, 1, 1], 2)
    loss = mincut_loss(c, g)
    assert loss.cut_term == pytest.approx(-1.0, abs=1e-10)


def test_collapse_uniform_is_zero():
    g = graph_from_adjacency(two_triangles())
    k = 3
    c = ClusterAssignment(C=np.full((6, k), 1.0 / k), K=k)
    assert dmon_loss(c, g).collapse_term == pytest.approx(0.0, abs=1e-10)


def test_collapse_single_cluster_anchor():
    g = graph_from_adjacency(two_triangles())
    k = 4
    c = hard_assignment([0] * 6, k)
    assert dmon_loss(c, g).collapse_term == pytest.approx(np.sqrt(k) - 1.0, abs=1e-10)


def test_collapse_weight_scales_total():
    g = graph_from_adjacency(two_triangles())
    c = hard_assignment([0] * 6, 2)
    loss = dmon_loss(c, g, collapse_weight=2.5)
    assert loss.total == pytest.approx(loss.modularity_term + 2.5 * loss.collapse_term)


def test_edgeless_graph_is_an_error():
    g = graph_from_adjacency(np.zeros((4, 4)))
    c = hard_assignment([0, 0, 1, 1], 2)
    with pytest.raises(DSGError):
        dmon_loss(c, g)
    with pytest.raises(DSGError):
        mincut_loss(c, g)


def _random_er_graph(rng, n, p=0.4):
    a = (rng.uniform(size=(n, n)) < p).astype(float)
    a = np.triu(a, k=1)
    a = a + a.T
    return a


def all_partitions(n, max_parts):
    """Every assignment of n nodes into at most max_parts labeled parts."""
    return itertools.product(range(max_parts), repeat=n)


def test_modularity_matches_brute_force_ten_nodes():
    """Exhaustive agreement on a 10-node graph, every hard partition
    into <= 3 clusters."""
    rng = np.random.default_rng(123)
    a = _random_er_graph(rng, 10)
    a[0, 1] = a[1, 0] = 1.0
    g = graph_from_adjacency(a)
    for labels in itertools.product(range(3), repeat=10):
        c = hard_assignment(labels, 3)
        communities = [[i for i in range(10) if labels[i] == k] for k in range(3)]
        q = brute_force_modularity(a, [m for m in communities if m])
        assert dmon_loss(c, g).modularity_term == pytest.approx(-q, abs=1e-10)


def test_modularity_matches_brute_force_exhaustively():
    """All graphs over 50 ER draws, <= 8 nodes, every hard partition
    into <= 3 clusters, 1e-10 agreement."""
    rng = np.random.default_rng(42)
    checked = 0
    for draw in range(50):
        n = int(rng.integers(4, 9))
        a = _random_er_graph(rng, n)
        if a.sum() == 0:
            continue
        g = graph_from_adjacency(a, seed=draw)
        for labels in all_partitions(n, 3):
            c = hard_assignment(labels, 3)
            communities = [[i for i in range(n) if labels[i] == k] for k in range(3)]
            communities = [m for m in communities if m]
            q = brute_force_modularity(a, communities)
            assert dmon_loss(c, g).modularity_term == pytest.approx(-q, abs=1e-10)
            checked += 1
    assert checked > 1000


def test_collapse_invariant_under_relabeling():
    rng = np.random.default_rng(7)
    g = graph_from_adjacency(_random_er_graph(rng, 7))
    c_soft = rng.dirichlet(np.ones(3), size=7)
    base = dmon_loss(ClusterAssignment(C=c_soft, K=3), g).collapse_term
    for perm in itertools.permutations(range(3)):
        permuted = dmon_loss(ClusterAssignment(C=c_soft[:, perm], K=3), g).collapse_term
        assert permuted == pytest.approx(base, abs=1e-12)


@pytest.mark.parametrize("objective", [dmon_loss, mincut_loss])
def test_losses_invariant_under_node_permutation(objective):
    rng = np.random.default_rng(9)
    n = 8
    a = _random_er_graph(rng, n)
    a[0, 1] = a[1, 0] = 1.0
    g = graph_from_adjacency(a)
    c_soft = rng.dirichlet(np.ones(3), size=n)
    base = objective(ClusterAssignment(C=c_soft, K=3), g)
    perm = rng.permutation(n)
    p_mat = np.eye(n)[perm]
    g_perm = graph_from_adjacency(p_mat @ a @ p_mat.T)
    permuted = objective(ClusterAssignment(C=c_soft[perm], K=3), g_perm)
    assert permuted.total == pytest.approx(base.total, abs=1e-8)


def test_mincut_ortho_zero_iff_scaled_identity():
    g = graph_from_adjacency(two_triangles())
    balanced = hard_assignment([0, 0, 0, 1, 1, 1], 2)
    assert mincut_loss(balanced, g).ortho_term == pytest.approx(0.0, abs=1e-12)
    k = 2
    uniform = ClusterAssignment(C=np.full((6, k), 1.0 / k), K=k)
    uc = mincut_loss(uniform, g).ortho_term
    # uniform assignment attains the rank-one maximum sqrt(2 - 2/sqrt(K))
    assert uc == pytest.approx(np.sqrt(2.0 - 2.0 / np.sqrt(k)), abs=1e-12)
    rng = np.random.default_rng(1)
    for _ in range(10):
        c_soft = rng.dirichlet(np.ones(k), size=6)
        assert mincut_loss(ClusterAssignment(C=c_soft, K=k), g).ortho_term <= uc + 1e-9


class TestPooling:
    def test_identity_pooling_preserves_graph(self):
        rng = np.random.default_rng(3)
        a = _random_er_graph(rng, 5)
        a[2, 3] = a[3, 2] = 1.0
        g = graph_from_adjacency(a)
        c = hard_assignment(range(5), 5)
        sg = pool_graph(c, g)
        np.testing.assert_allclose(sg.X_pool, g.node_features)
        expected = a.copy()
        np.fill_diagonal(expected, 0.0)
        np.testing.assert_allclose(sg.A_pool, expected)

    def test_merging_identical_nodes_sums_features(self):
        g = graph_from_adjacency(two_triangles())
        g.node_features[1] = g.node_features[0]
        c = hard_assignment([0, 0, 1, 1, 1, 1], 2)
        sg = pool_graph(c, g)
        np.testing.assert_allclose(sg.X_pool[0], 2 * g.node_features[0])

    def test_planted_blocks_have_empty_offdiagonal(self):
        g = graph_from_adjacency(two_triangles())
        c = hard_assignment([0, 0, 0, 1, 1, 1], 2)
        sg = pool_graph(c, g)
        assert sg.A_pool[0, 1] == pytest.approx(0.0, abs=1e-12)
        assert np.diagonal(sg.A_pool).max() == 0.0

    def test_pooling_preserves_feature_mass(self):
        rng = np.random.default_rng(11)
        a = _random_er_graph(rng, 9)
        a[0, 1] = a[1, 0] = 1.0
        g = graph_from_adjacency(a)
        c_soft = rng.dirichlet(np.ones(4), size=9)
        sg = pool_graph(ClusterAssignment(C=c_soft, K=4), g)
        np.testing.assert_allclose(
            sg.X_pool.sum(axis=0), g.node_features.sum(axis=0), atol=1e-5
        )

    def test_w_pool_initialized_in_unit_interval(self):
        g = graph_from_adjacency(two_triangles())
        c = hard_assignment([0, 0, 1, 1, 2, 2], 3)
        sg = pool_graph(c, g)
        assert sg.W_pool.min() >= 0.0 and sg.W_pool.max() <= 1.0


class TestHead:
    def test_single_node_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        g = DynamicGraph(
            w=1, n=2, d=6, node_features=rng.standard_normal((2, 6)),
            spatial_edges=np.array([[0.0, 1.0, 0.5]]), temporal_edges=np.zeros((0, 3)),
        )
        head = ClusteringHead(6, 2, (4,), (), rng)
        a = assign_clusters(g, head)
        np.testing.assert_allclose(a.C.sum(axis=1), 1.0, atol=1e-9)

    def test_k_exceeding_nodes_rejected(self):
        rng = np.random.default_rng(0)
        g = DynamicGraph(
            w=1, n=2, d=6, node_features=rng.standard_normal((2, 6)),
            spatial_edges=np.array([[0.0, 1.0, 0.5]]), temporal_edges=np.zeros((0, 3)),
        )
        head = ClusteringHead(6, 4, (4,), (), rng)
        with pytest.raises(DSGError):
            assign_clusters(g, head)

    def test_mirrored_components_get_mirrored_assignments(self):
        # two disconnected identical components + identical features
        rng = np.random.default_rng(5)
        feats = rng.standard_normal((2, 6))
        g = DynamicGraph(
            w=1, n=4, d=6, node_features=np.vstack([feats, feats]),
            spatial_edges=np.array([[0.0, 1.0, 0.7], [2.0, 3.0, 0.7]]),
            temporal_edges=np.zeros((0, 3)),
        )
        head = ClusteringHead(6, 2, (4,), (), rng)
        a = assign_clusters(g, head)
        np.testing.assert_allclose(a.C[:2], a.C[2:], atol=1e-9)


def test_assignment_validation():
    with pytest.raises(DSGError):
        ClusterAssignment(C=np.array([[0.5, 0.6]]), K=2)
    with pytest.raises(DSGError):
        ClusterAssignment(C=np.array([[1.5, -0.5]]), K=2)


def test_scene_graph_exports():
    g = graph_from_adjacency(two_triangles())
    sg = pool_graph(hard_assignment([0, 0, 0, 1, 1, 1], 2), g)
    sg.cluster_labels = [3, 1]
    import json

    payload = json.loads(scene_graph_to_json(sg, include_features=True))
    assert payload["K"] == 2
    assert payload["cluster_labels"] == [3, 1]
    assert len(payload["X_pool"]) == 2
    dot = scene_graph_to_dot(sg)
    assert dot.startswith("graph") and "c0" in dot
