"""Few-shot prototype matching and segmentation rendering.

Class prototypes are L2-normalized means of annotated patch features.
Clusters are named by cosine similarity between their pooled feature row
and each prototype (argmax, ties to the lowest class index); rendered
segmentation maps assign every patch the label of its argmax cluster.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .clustering import ClusterAssignment, PooledSceneGraph
from .errors import DSGError

log = logging.getLogger(__name__)


@dataclass
class PrototypeBank:
    prototypes: dict[int, np.ndarray]  # class -> unit-norm d-vector
    support_counts: dict[int, int]

    def classes(self) -> list[int]:
        return sorted(self.prototypes)


@dataclass
class SegmentationMap:
    """Per-patch class indices on the grid, one layer per frame."""

    labels: np.ndarray  # (w, rows, cols) int
    grid: tuple[int, int]
    frame_ids: list[int] | None = None

    @property
    def w(self) -> int:
        return self.labels.shape[0]

    def flat(self) -> np.ndarray:
        return self.labels.reshape(self.w, -1)

    def to_json(self) -> str:
        records = []
        for t in range(self.w):
            fid = self.frame_ids[t] if self.frame_ids else t
            records.append(
                {"frame_id": int(fid), "grid": list(self.grid), "mask": self.flat()[t].tolist()}
            )
        return json.dumps(records, indent=2)

    def to_pgm(self, frame: int = 0) -> str:
        """Plain-text PGM (P2) of one frame, for eyeballing."""
        rows, cols = self.grid
        grid = self.labels[frame]
        peak = max(int(grid.max()), 1)
        lines = ["P2", f"{cols} {rows}", str(peak)]
        for r in range(rows):
            lines.append(" ".join(str(int(v)) for v in grid[r]))
        return "\n".join(lines) + "\n"


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def downsample_mask(pixel_mask: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Pixel-resolution class mask -> patch-resolution by majority vote
    per patch cell (ties to the lowest class index). Returns (n,)."""
    mask = np.asarray(pixel_mask, dtype=np.int64)
    if mask.ndim != 2:
        raise DSGError(f"pixel mask must be 2-D, got shape {mask.shape}")
    rows, cols = grid
    h, w = mask.shape
    if h % rows or w % cols:
        raise DSGError(f"mask {mask.shape} does not tile a {rows}x{cols} grid")
    ph, pw = h // rows, w // cols
    out = np.zeros(rows * cols, dtype=np.int64)
    for r in range(rows):
        for c in range(cols):
            cell = mask[r * ph : (r + 1) * ph, c * pw : (c + 1) * pw]
            out[r * cols + c] = np.bincount(cell.ravel()).argmax()
    return out


def build_prototypes(annotated, expected_classes=None) -> PrototypeBank:
    """Mean patch feature per class over annotated frames, L2-normalized.

    `annotated` is a list of (features (n, d), mask (n,) class indices).
    Member rows are sorted before summation, so the result is bitwise
    independent of patch and frame ordering. Classes listed in
    `expected_classes` but absent from every mask are excluded from the
    bank and reported via logging.
    """
    if not annotated:
        raise DSGError("need at least one annotated frame")
    members: dict[int, list[np.ndarray]] = {}
    for features, mask in annotated:
        feats = np.asarray(features, dtype=np.float64)
        labels = np.asarray(mask, dtype=np.int64)
        if feats.shape[0] != labels.shape[0]:
            raise DSGError(f"{feats.shape[0]} patches but {labels.shape[0]} mask entries")
        for cls in np.unique(labels):
            if cls < 0:  # void/ignore index
                continue
            members.setdefault(int(cls), []).append(feats[labels == cls])
    if expected_classes is not None:
        for cls in expected_classes:
            if cls not in members:
                log.warning("class %d has no support patches; excluded from bank", cls)
    prototypes: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for cls, rows in members.items():
        stacked = np.concatenate(rows, axis=0)
        order = np.lexsort(stacked.T[::-1])  # lexicographic row order
        total = np.zeros(stacked.shape[1])
        for row in stacked[order]:
            total += row
        counts[cls] = stacked.shape[0]
        prototypes[cls] = _unit(total / stacked.shape[0])
    return PrototypeBank(prototypes=prototypes, support_counts=counts)


def label_clusters(sg: PooledSceneGraph, bank: PrototypeBank) -> list[int]:
    """Class per cluster by cosine similarity of the pooled feature row
    against every prototype. Ties break toward the lowest class index.
    Multiple clusters may share a label."""
    if not bank.prototypes:
        raise DSGError("empty prototype bank")
    classes = bank.classes()
    proto = np.stack([bank.prototypes[c] for c in classes])  # (C, d)
    reps = np.stack([_unit(row) for row in sg.X_pool])  # (K, d)
    scores = reps @ proto.T
    labels = [classes[int(np.argmax(scores[k]))] for k in range(sg.K)]
    sg.cluster_labels = labels
    return labels


def render_segmentation(
    assignment: ClusterAssignment,
    cluster_labels,
    grid: tuple[int, int],
    frame_ids=None,
) -> SegmentationMap:
    """Hard-assign every patch the label of its argmax cluster; one map
    per frame of the window."""
    if len(cluster_labels) < assignment.K:
        raise DSGError(f"{len(cluster_labels)} labels for {assignment.K} clusters")
    rows, cols = grid
    n = rows * cols
    num_nodes = assignment.C.shape[0]
    if num_nodes % n != 0:
        raise DSGError(f"{num_nodes} nodes do not tile a {rows}x{cols} grid")
    w = num_nodes // n
    hard = assignment.hard()
    labels = np.array([cluster_labels[k] for k in hard], dtype=np.int64)
    return SegmentationMap(labels=labels.reshape(w, rows, cols), grid=grid, frame_ids=frame_ids)
