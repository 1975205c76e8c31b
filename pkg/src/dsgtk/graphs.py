"""Patch-graph construction.

Per-frame graphs connect patches whose feature dot products are positive
(and above a similarity threshold); windowed dynamic graphs add sparse
temporal edges from correspondence matching between consecutive frames.
Node indexing is frame-major: node = frame * n + patch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DSGError


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    """Rows scaled to unit norm; zero rows stay zero."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


@dataclass
class FeatureClip:
    """A window of per-frame patch feature matrices plus frame metadata."""

    features: np.ndarray  # (w, n, d)
    frame_ids: list[int]
    grid: tuple[int, int]
    phase_label: int | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 3:
            raise DSGError(f"clip features must be (w, n, d), got {self.features.shape}")
        w, n, _ = self.features.shape
        if w < 1:
            raise DSGError("clip needs at least one frame")
        if self.grid[0] * self.grid[1] != n:
            raise DSGError(f"grid {self.grid} does not cover {n} patches")
        if len(self.frame_ids) != w:
            raise DSGError(f"{w} frames but {len(self.frame_ids)} frame ids")
        if not np.all(np.isfinite(self.features)):
            raise DSGError("clip features contain non-finite values")

    @property
    def w(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[2]


@dataclass
class FrameGraph:
    """Static patch graph for one frame: symmetric nonnegative weights
    stored once per pair (u < v), zero diagonal."""

    n: int
    edges_u: np.ndarray
    edges_v: np.ndarray
    edges_w: np.ndarray
    node_features: np.ndarray

    def dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.edges_u, self.edges_v] = self.edges_w
        a[self.edges_v, self.edges_u] = self.edges_w
        return a

    @property
    def num_edges(self) -> int:
        return len(self.edges_w)


@dataclass
class DynamicGraph:
    """Windowed patch graph: per-frame spatial edges plus a partial
    matching of temporal edges between consecutive frames."""

    w: int
    n: int
    d: int
    node_features: np.ndarray  # (w*n, d), positional encodings included
    spatial_edges: np.ndarray  # (m, 3) rows [u, v, weight], same-frame pairs
    temporal_edges: np.ndarray  # (m, 3) rows [u, v, weight], frame t -> t+1

    @property
    def num_nodes(self) -> int:
        return self.w * self.n

    def combined_adjacency(self, spatial_weight=1.0, temporal_weight=1.0) -> np.ndarray:
        """Dense symmetric adjacency merging both edge sets."""
        a = np.zeros((self.num_nodes, self.num_nodes))
        for edges, scale in ((self.spatial_edges, spatial_weight), (self.temporal_edges, temporal_weight)):
            if len(edges) == 0:
                continue
            u = edges[:, 0].astype(np.int64)
            v = edges[:, 1].astype(np.int64)
            np.add.at(a, (u, v), edges[:, 2] * scale)
            np.add.at(a, (v, u), edges[:, 2] * scale)
        return a


def node_index(frame: int, patch: int, n: int) -> int:
    return frame * n + patch


def node_location(node: int, n: int) -> tuple[int, int]:
    """Inverse of node_index: node -> (frame, patch)."""
    return divmod(node, n)


def build_adjacency(features: np.ndarray, normalize: bool = True) -> FrameGraph:
    """Patchwise dot-product graph: positive dot products become edge
    weights, everything else (including the diagonal) is zero.

    With `normalize` the dot product is a cosine similarity, which makes
    downstream thresholds scale-free.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise DSGError(f"expected (n, d) features, got {feats.shape}")
    if not np.all(np.isfinite(feats)):
        raise DSGError("features contain non-finite values")
    scored = l2_normalize_rows(feats) if normalize else feats
    u, v, w = kernels.similarity_edges(scored, 0.0)
    return FrameGraph(n=feats.shape[0], edges_u=u, edges_v=v, edges_w=w, node_features=feats)


def threshold_graph(graph: FrameGraph, tau: float) -> FrameGraph:
    """Drop edges with weight <= tau; surviving weights are retained."""
    keep = graph.edges_w > tau
    return FrameGraph(
        n=graph.n,
        edges_u=graph.edges_u[keep],
        edges_v=graph.edges_v[keep],
        edges_w=graph.edges_w[keep],
        node_features=graph.node_features,
    )


def sinusoid_table(positions: np.ndarray, dim: int) -> np.ndarray:
    """Transformer-style sine/cosine table, rows indexed by position."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    half = (dim + 1) // 2
    freqs = np.power(10000.0, -2.0 * np.arange(half) / dim)
    angles = positions * freqs
    table = np.zeros((positions.shape[0], dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : dim // 2])
    return table


def add_positional_encodings(
    clip: FeatureClip,
    temporal: bool = True,
    spatial: bool = False,
    scale: float = 0.1,
) -> np.ndarray:
    """Node features with additive sinusoidal encodings of frame index
    (temporal) and of patch (row, col) (spatial). Returns (w*n, d)."""
    w, n, d = clip.features.shape
    if (temporal or spatial) and d < 8:
        raise DSGError(f"feature dim {d} too small for sinusoidal bands (need >= 8)")
    out = clip.features.reshape(w * n, d).copy()
    if temporal:
        frame_pe = sinusoid_table(np.arange(w), d) * scale
        out += np.repeat(frame_pe, n, axis=0)
    if spatial:
        rows_n, cols_n = clip.grid
        half = d // 2
        rr, cc = np.divmod(np.arange(n), cols_n)
        pe = np.zeros((n, d))
        pe[:, :half] = sinusoid_table(rr, half)
        pe[:, half:] = sinusoid_table(cc, d - half)
        out += np.tile(pe * scale, (w, 1))
    return out


def build_dynamic_graph(
    clip: FeatureClip,
    tau: float,
    matches: Sequence,
    normalize: bool = True,
    temporal_encoding: bool = True,
    spatial_encoding: bool = False,
    encoding_scale: float = 0.1,
) -> DynamicGraph:
    """Assemble the windowed graph: thresholded per-frame similarity
    edges plus matcher correspondences as temporal edges.

    `matches` supplies one match list per consecutive frame pair
    (length w - 1); each entry needs a `.pairs` list of
    (patch_t, patch_t1, confidence).
    """
    w, n, d = clip.features.shape
    if len(matches) != w - 1:
        raise DSGError(f"need {w - 1} match lists for {w} frames, got {len(matches)}")

    spatial_rows = []
    for t in range(w):
        feats = l2_normalize_rows(clip.features[t]) if normalize else clip.features[t]
        u, v, wt = kernels.similarity_edges(feats, tau)
        if len(u):
            spatial_rows.append(np.column_stack([u + t * n, v + t * n, wt]))
    spatial = np.vstack(spatial_rows) if spatial_rows else np.zeros((0, 3))

    temporal_rows = []
    for t, mlist in enumerate(matches):
        mlist.validate(context=f"frame pair {t}")
        for i, j, conf in mlist.pairs:
            if not (0 <= i < n and 0 <= j < n):
                raise DSGError(f"match index ({i}, {j}) out of range for {n} patches")
            temporal_rows.append((node_index(t, i, n), node_index(t + 1, j, n), conf))
    temporal = np.array(temporal_rows, dtype=np.float64) if temporal_rows else np.zeros((0, 3))

    node_features = add_positional_encodings(
        clip, temporal=temporal_encoding, spatial=spatial_encoding, scale=encoding_scale
    )
    return DynamicGraph(
        w=w, n=n, d=d,
        node_features=node_features,
        spatial_edges=spatial,
        temporal_edges=temporal,
    )


# ---------------------------------------------------------------------------
# exports


def graph_to_json(graph: DynamicGraph) -> str:
    payload = {
        "w": graph.w,
        "n": graph.n,
        "d": graph.d,
        "spatial_edges": [[int(u), int(v), float(wt)] for u, v, wt in graph.spatial_edges],
        "temporal_edges": [[int(u), int(v), float(wt)] for u, v, wt in graph.temporal_edges],
    }
    return json.dumps(payload, indent=2)


_PALETTE = (
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
    "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd",
)


def graph_to_dot(graph: DynamicGraph, cluster_ids=None) -> str:
    """DOT rendering; optional per-node cluster ids drive fill colors."""
    lines = ["graph dynamic_patch_graph {", "  node [shape=circle style=filled];"]
    for node in range(graph.num_nodes):
        t, p = node_location(node, graph.n)
        color = ""
        if cluster_ids is not None:
            color = f' fillcolor="{_PALETTE[int(cluster_ids[node]) % len(_PALETTE)]}"'
        lines.append(f'  n{node} [label="t{t}p{p}"{color}];')
    for u, v, wt in graph.spatial_edges:
        lines.append(f"  n{int(u)} -- n{int(v)} [weight={wt:.4f}];")
    for u, v, wt in graph.temporal_edges:
        lines.append(f"  n{int(u)} -- n{int(v)} [weight={wt:.4f} style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"
