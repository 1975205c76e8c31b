"""Differentiable graph clustering and pooling.

A GCN + MLP + softmax head produces soft cluster assignments; the
assignment is scored either with a modularity + collapse-regularization
objective or with a normalized-cut + orthogonality objective, and the
dynamic graph is pooled into a scene graph over cluster nodes.

Loss gradients with respect to the assignment matrix are derived in
closed form and recorded as single fused tape ops.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import DSGError
from .graphs import DynamicGraph


@dataclass
class ClusterAssignment:
    """Row-stochastic soft assignment of nodes to K clusters."""

    C: np.ndarray  # (num_nodes, K)
    K: int

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=np.float64)
        if self.C.ndim != 2 or self.C.shape[1] != self.K:
            raise DSGError(f"assignment shape {self.C.shape} does not match K={self.K}")
        rows = self.C.sum(axis=1)
        if np.any(self.C < -1e-9) or np.any(np.abs(rows - 1.0) > 1e-6):
            raise DSGError("assignment rows must be nonnegative and sum to 1")

    def hard(self) -> np.ndarray:
        """Argmax cluster ids (ties to the lowest index)."""
        return np.argmax(self.C, axis=1)


@dataclass
class PooledSceneGraph:
    """K cluster nodes with pooled features, pooled adjacency, and
    relaxed inter-cluster edge weights in [0, 1]."""

    X_pool: np.ndarray  # (K, d)
    A_pool: np.ndarray  # (K, K), symmetric nonnegative, zero diagonal
    W_pool: np.ndarray  # (K, K), entries in [0, 1]
    frame_span: tuple[int, int]
    cluster_labels: list[int] | None = None

    @property
    def K(self) -> int:
        return self.X_pool.shape[0]


@dataclass
class ClusteringLoss:
    """Unsupervised clustering objective value, split into the graph
    structure term and the balance regularizer."""

    objective: str  # "dmon" or "mincut"
    structure_term: float
    balance_term: float
    balance_weight: float
    total: float

    # vocabulary aliases per objective
    @property
    def modularity_term(self) -> float:
        return self.structure_term

    @property
    def collapse_term(self) -> float:
        return self.balance_term

    @property
    def cut_term(self) -> float:
        return self.structure_term

    @property
    def ortho_term(self) -> float:
        return self.balance_term


def _as_adjacency(graph) -> np.ndarray:
    if isinstance(graph, DynamicGraph):
        return graph.combined_adjacency()
    a = np.asarray(graph, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DSGError(f"adjacency must be square, got {a.shape}")
    return a


def _require_edges(a: np.ndarray) -> float:
    two_m = float(a.sum())
    if two_m <= 0.0:
        raise DSGError("clustering loss undefined on an edgeless graph")
    return two_m


# ---------------------------------------------------------------------------
# closed-form values and gradients


def _dmon_values(C: np.ndarray, a: np.ndarray) -> tuple[float, float]:
    two_m = _require_edges(a)
    deg = a.sum(axis=1, keepdims=True)
    s = deg.T @ C  # (1, K)
    trace_ac = float(np.sum(C * (a @ C)))
    trace_dd = float(np.sum(s * s)) / two_m
    modularity = -(trace_ac - trace_dd) / two_m
    n, k = C.shape
    collapse = math.sqrt(k) / n * float(np.linalg.norm(C.sum(axis=0))) - 1.0
    return modularity, collapse


def _dmon_grads(C: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    two_m = _require_edges(a)
    deg = a.sum(axis=1, keepdims=True)
    s = deg.T @ C
    g_mod = -(2.0 / two_m) * (a @ C - deg @ s / two_m)
    n, k = C.shape
    col = C.sum(axis=0, keepdims=True)
    g_col = math.sqrt(k) / n * np.repeat(col / np.linalg.norm(col), n, axis=0)
    return g_mod, g_col


def _mincut_values(C: np.ndarray, a: np.ndarray) -> tuple[float, float]:
    _require_edges(a)
    deg = a.sum(axis=1, keepdims=True)
    num = float(np.sum(C * (a @ C)))
    den = float(np.sum(deg * C * C))
    if den <= 0.0:
        raise DSGError("degenerate assignment: zero degree-weighted mass")
    cut = -num / den
    k = C.shape[1]
    s_mat = C.T @ C
    fro = np.linalg.norm(s_mat)
    ortho = float(np.linalg.norm(s_mat / fro - np.eye(k) / math.sqrt(k)))
    return cut, ortho


def _mincut_grads(C: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    deg = a.sum(axis=1, keepdims=True)
    ac = a @ C
    num = float(np.sum(C * ac))
    den = float(np.sum(deg * C * C))
    g_cut = -(2.0 * ac * den - num * 2.0 * deg * C) / (den * den)

    k = C.shape[1]
    s_mat = C.T @ C
    fro = np.linalg.norm(s_mat)
    m_mat = s_mat / fro - np.eye(k) / math.sqrt(k)
    l_val = np.linalg.norm(m_mat)
    if l_val < 1e-12:
        return g_cut, np.zeros_like(C)
    g_s = m_mat / (fro * l_val) - (np.sum(m_mat * s_mat) / (fro**3 * l_val)) * s_mat
    g_ortho = 2.0 * C @ g_s
    return g_cut, g_ortho


# ---------------------------------------------------------------------------
# fused tape ops


def dmon_terms_op(C: nn.Var, adjacency: np.ndarray) -> tuple[nn.Var, nn.Var]:
    """Tape ops for (modularity term, collapse term) of an assignment."""
    mod_val, col_val = _dmon_values(C.value, adjacency)
    cache = {}

    def grads():
        if "g" not in cache:
            cache["g"] = _dmon_grads(C.value, adjacency)
        return cache["g"]

    mod = C.tape.record(nn.as_matrix(mod_val), (C,), lambda g: (g[0, 0] * grads()[0],))
    col = C.tape.record(nn.as_matrix(col_val), (C,), lambda g: (g[0, 0] * grads()[1],))
    return mod, col


def mincut_terms_op(C: nn.Var, adjacency: np.ndarray) -> tuple[nn.Var, nn.Var]:
    """Tape ops for (cut term, orthogonality term) of an assignment."""
    cut_val, ortho_val = _mincut_values(C.value, adjacency)
    cache = {}

    def grads():
        if "g" not in cache:
            cache["g"] = _mincut_grads(C.value, adjacency)
        return cache["g"]

    cut = C.tape.record(nn.as_matrix(cut_val), (C,), lambda g: (g[0, 0] * grads()[0],))
    ortho = C.tape.record(nn.as_matrix(ortho_val), (C,), lambda g: (g[0, 0] * grads()[1],))
    return cut, ortho


# ---------------------------------------------------------------------------
# public value-level API


def dmon_loss(assignment: ClusterAssignment, graph, collapse_weight: float = 1.0) -> ClusteringLoss:
    """Modularity + collapse regularization of a soft assignment."""
    a = _as_adjacency(graph)
    mod, col = _dmon_values(assignment.C, a)
    return ClusteringLoss(
        objective="dmon",
        structure_term=mod,
        balance_term=col,
        balance_weight=collapse_weight,
        total=mod + collapse_weight * col,
    )


def mincut_loss(assignment: ClusterAssignment, graph, ortho_weight: float = 1.0) -> ClusteringLoss:
    """Normalized cut + cluster orthogonality of a soft assignment."""
    a = _as_adjacency(graph)
    cut, ortho = _mincut_values(assignment.C, a)
    return ClusteringLoss(
        objective="mincut",
        structure_term=cut,
        balance_term=ortho,
        balance_weight=ortho_weight,
        total=cut + ortho_weight * ortho,
    )


def pool_graph(assignment: ClusterAssignment, graph) -> PooledSceneGraph:
    """Pool node features and adjacency through the assignment.

    X_pool = C^T X, A_pool = C^T A C with the diagonal zeroed after
    pooling. W_pool starts as A_pool scaled to [0, 1]; the downstream
    edge-weight head overwrites it.
    """
    a = _as_adjacency(graph)
    if isinstance(graph, DynamicGraph):
        x = graph.node_features
        span = (0, graph.w)
    else:
        raise DSGError("pool_graph needs a DynamicGraph to read node features from")
    C = assignment.C
    if C.shape[0] != x.shape[0]:
        raise DSGError(f"assignment covers {C.shape[0]} nodes, graph has {x.shape[0]}")
    x_pool = C.T @ x
    a_pool = C.T @ a @ C
    np.fill_diagonal(a_pool, 0.0)
    peak = a_pool.max()
    w_pool = a_pool / peak if peak > 0 else np.zeros_like(a_pool)
    return PooledSceneGraph(X_pool=x_pool, A_pool=a_pool, W_pool=w_pool, frame_span=span)


# ---------------------------------------------------------------------------
# clustering head


class ClusteringHead:
    """GCN stack + MLP + row softmax producing the soft assignment."""

    def __init__(self, d: int, K: int, gcn_hidden, mlp_hidden, rng, prefix="cluster"):
        if K < 2:
            raise DSGError(f"need at least 2 clusters, got K={K}")
        self.K = K
        self.gcn_weights: list[nn.Parameter] = []
        width = d
        for i, h in enumerate(gcn_hidden):
            self.gcn_weights.append(nn.Parameter(f"{prefix}.gcn{i}.W", nn.glorot(rng, width, h)))
            width = h
        self.mlp: list[tuple[nn.Parameter, nn.Parameter]] = []
        for i, h in enumerate(list(mlp_hidden) + [K]):
            w = nn.Parameter(f"{prefix}.mlp{i}.W", nn.glorot(rng, width, h))
            b = nn.Parameter(f"{prefix}.mlp{i}.b", np.zeros((1, h)))
            self.mlp.append((w, b))
            width = h

    def parameters(self) -> list[nn.Parameter]:
        out = list(self.gcn_weights)
        for w, b in self.mlp:
            out.extend((w, b))
        return out

    def forward(self, tape: nn.Tape, adjacency: nn.Var, x: nn.Var) -> nn.Var:
        h = x
        for w in self.gcn_weights:
            h = nn.gcn_layer(adjacency, h, tape.watch(w), activation="selu")
        for i, (w, b) in enumerate(self.mlp):
            h = nn.dense_forward(h, tape.watch(w), tape.watch(b))
            if i < len(self.mlp) - 1:
                h = nn.selu(h)
        return nn.softmax_rows(h)


def assign_clusters(graph: DynamicGraph, head: ClusteringHead,
                    spatial_weight=1.0, temporal_weight=1.0) -> ClusterAssignment:
    """Run the head on a graph (inference only, throwaway tape)."""
    if graph.num_nodes < 1:
        raise DSGError("empty graph")
    if head.K > graph.num_nodes:
        raise DSGError(f"K={head.K} exceeds node count {graph.num_nodes}")
    tape = nn.Tape()
    adj = tape.const(graph.combined_adjacency(spatial_weight, temporal_weight))
    x = tape.const(graph.node_features)
    c = head.forward(tape, adj, x)
    return ClusterAssignment(C=c.value, K=head.K)


# ---------------------------------------------------------------------------
# scene graph exports


def scene_graph_to_json(sg: PooledSceneGraph, include_features: bool = False) -> str:
    payload = {
        "K": sg.K,
        "X_pool_shape": list(sg.X_pool.shape),
        "A_pool": sg.A_pool.tolist(),
        "W_pool": sg.W_pool.tolist(),
        "cluster_labels": sg.cluster_labels,
        "frame_span": list(sg.frame_span),
    }
    if include_features:
        payload["X_pool"] = sg.X_pool.tolist()
    return json.dumps(payload, indent=2)


def scene_graph_to_dot(sg: PooledSceneGraph, min_weight: float = 0.05) -> str:
    """DOT rendering with edge thickness proportional to the learned
    relation strength."""
    lines = ["graph scene_graph {", "  node [shape=ellipse style=filled fillcolor=lightgray];"]
    for k in range(sg.K):
        label = f"c{k}" if sg.cluster_labels is None else f"c{k}:{sg.cluster_labels[k]}"
        lines.append(f'  c{k} [label="{label}"];')
    for i in range(sg.K):
        for j in range(i + 1, sg.K):
            wt = float(sg.W_pool[i, j])
            if sg.A_pool[i, j] > 0 and wt >= min_weight:
                lines.append(f"  c{i} -- c{j} [penwidth={max(0.2, 5.0 * wt):.2f} label=\"{wt:.2f}\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"
