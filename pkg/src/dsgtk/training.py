"""Joint training loop and evaluation helpers.

Training runs mini-batch Adam on the joint objective with gradient
accumulation across the clips of a batch (each clip is an independent
forward graph). Per-epoch validation accuracy / macro-F1 are logged and
the best-by-validation-F1 parameter set is retained. Runs are
deterministic under a fixed seed in single-threaded mode.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config
from .data import ClipDataset, truncate_clips
from .errors import DSGError
from .graphs import DynamicGraph, build_dynamic_graph
from .matching import match_consecutive
from .metrics import micro_f1, nmi, phase_metrics, segmentation_metrics
from .model import DSGModel, ModelSpec
from .nn import Adam
from .prototypes import build_prototypes, label_clusters, render_segmentation


def model_from_config(cfg: Config, feature_dim: int, phases: int, seed=None) -> DSGModel:
    spec = ModelSpec(
        feature_dim=feature_dim,
        clusters=cfg.clusters,
        phases=phases,
        gcn_hidden=cfg.gcn_hidden,
        mlp_hidden=cfg.mlp_hidden,
        edge_hidden=cfg.edge_hidden,
        cls_hidden=cfg.cls_hidden,
        objective=cfg.clustering_objective,
        collapse_weight=cfg.collapse_weight,
        loss_weight_clustering=cfg.loss_weight_clustering,
        loss_weight_classification=cfg.loss_weight_classification,
        spatial_edge_weight=cfg.spatial_edge_weight,
        temporal_edge_weight=cfg.temporal_edge_weight,
    )
    return DSGModel(spec, seed=cfg.seed if seed is None else seed)


def prepare_dataset(ds: ClipDataset, cfg: Config) -> ClipDataset:
    """Fit the dataset window to the configured window size."""
    if cfg.window_size > ds.window_size:
        raise DSGError(
            f"config window_size {cfg.window_size} exceeds dataset window {ds.window_size}"
        )
    if cfg.window_size < ds.window_size:
        return truncate_clips(ds, cfg.window_size)
    return ds


class GraphCache:
    """Deterministic per-clip dynamic graphs, built once and reused
    across epochs."""

    def __init__(self, ds: ClipDataset, cfg: Config):
        self.ds = ds
        self.cfg = cfg
        self._graphs: dict[int, DynamicGraph] = {}

    def graph(self, index: int) -> DynamicGraph:
        if index not in self._graphs:
            clip = self.ds.clip(index)
            lists = None
            if self.cfg.match_source in ("auto", "files"):
                lists = self.ds.match_lists(index)
            if lists is None:
                if self.cfg.match_source == "files":
                    raise DSGError(f"clip {self.ds.clips[index].id}: no match file")
                lists = match_consecutive(clip.features, min_conf=self.cfg.match_min_conf)
            self._graphs[index] = build_dynamic_graph(
                clip,
                self.cfg.tau,
                lists,
                normalize=self.cfg.normalize_features,
                temporal_encoding=self.cfg.temporal_encoding,
                spatial_encoding=self.cfg.spatial_encoding,
                encoding_scale=self.cfg.encoding_scale,
            )
        return self._graphs[index]


@dataclass
class EpochRow:
    epoch: int
    L_u: float
    L_CE: float
    L_joint: float
    val_acc: float
    val_f1: float


@dataclass
class TrainResult:
    model: DSGModel
    optimizer: Adam
    history: list[EpochRow]
    best_params: dict[str, np.ndarray]
    best_epoch: int
    cache: GraphCache
    seconds: float = 0.0

    def restore_best(self):
        for p in self.model.parameters():
            p.value[:] = self.best_params[p.name]


HISTORY_HEADER = "epoch,L_u,L_CE,L_joint,val_acc,val_f1"


def write_history_csv(path, history: list[EpochRow]):
    lines = [HISTORY_HEADER]
    for row in history:
        lines.append(
            f"{row.epoch},{row.L_u:.12g},{row.L_CE:.12g},{row.L_joint:.12g},"
            f"{row.val_acc:.12g},{row.val_f1:.12g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def predict_split(model: DSGModel, ds: ClipDataset, cache: GraphCache, split: str):
    indices = ds.split_indices(split)
    preds, gts = [], []
    for i in indices:
        rec = ds.clips[i]
        if rec.label is None:
            continue
        preds.append(model.predict(cache.graph(i)).predicted)
        gts.append(rec.label)
    return np.array(preds, dtype=np.int64), np.array(gts, dtype=np.int64)


def evaluate_split(model: DSGModel, ds: ClipDataset, cache: GraphCache, split: str):
    preds, gts = predict_split(model, ds, cache, split)
    if len(gts) == 0:
        raise DSGError(f"split {split!r} has no labeled clips")
    acc, macro = phase_metrics(preds, gts)
    return {"accuracy": acc, "macro_f1": macro, "micro_f1": micro_f1(preds, gts)}


def train(ds: ClipDataset, cfg: Config, model: DSGModel | None = None,
          log=None) -> TrainResult:
    """Mini-batch Adam training of the joint objective."""
    started = time.time()
    ds = prepare_dataset(ds, cfg)
    train_idx = ds.split_indices("train")
    if not train_idx:
        raise DSGError("dataset has no training clips")
    for i in train_idx:
        if ds.clips[i].label is None:
            raise DSGError(f"training clip {ds.clips[i].id} has no phase label")
    val_idx = ds.split_indices("val")

    cache = GraphCache(ds, cfg)
    if model is None:
        model = model_from_config(cfg, ds.feature_dim, ds.phase_count)
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    shuffle_rng = np.random.default_rng(cfg.seed + 1)

    history: list[EpochRow] = []
    best_f1 = -1.0
    best_epoch = -1
    best_params = {p.name: p.value.copy() for p in params}

    for epoch in range(cfg.epochs):
        order = np.array(train_idx)
        shuffle_rng.shuffle(order)
        sums = np.zeros(3)
        count = 0
        for start in range(0, len(order), cfg.batch):
            batch = order[start : start + cfg.batch]
            opt.zero_grad()
            for idx in batch:
                result = model.forward(cache.graph(idx), ds.clips[idx].label)
                result.tape.backward(result.l_joint)
                report = result.report(model.spec)
                sums += (report.L_u, report.L_CE, report.L_joint)
                count += 1
            for p in params:
                p.grad /= len(batch)
            opt.step()
        mean_u, mean_ce, mean_joint = sums / max(count, 1)

        if val_idx:
            scores = evaluate_split(model, ds, cache, "val")
            val_acc, val_f1 = scores["accuracy"], scores["macro_f1"]
        else:
            val_acc = val_f1 = float("nan")
        history.append(EpochRow(epoch, mean_u, mean_ce, mean_joint, val_acc, val_f1))
        if log:
            log(history[-1])
        # ties go to the later epoch: the unsupervised objective keeps
        # improving after validation F1 saturates
        if val_idx and val_f1 >= best_f1:
            best_f1 = val_f1
            best_epoch = epoch
            best_params = {p.name: p.value.copy() for p in params}

    if not val_idx or best_epoch < 0:
        best_params = {p.name: p.value.copy() for p in params}
        best_epoch = cfg.epochs - 1
    return TrainResult(
        model=model, optimizer=opt, history=history, best_params=best_params,
        best_epoch=best_epoch, cache=cache, seconds=time.time() - started,
    )


# ---------------------------------------------------------------------------
# segmentation evaluation


def support_frames(ds: ClipDataset, per_class: int = 5):
    """Collect annotated (features, mask) frames from the training split
    so that every class draws on at most `per_class` frames.

    A frame is picked when it still helps some class; patches of classes
    that already have their full budget are relabeled to the void index
    (-1), which the prototype builder ignores.
    """
    budget: dict[int, int] = {}
    picked = []
    for i in ds.split_indices("train"):
        rec = ds.clips[i]
        if rec.masks is None:
            continue
        for t in range(ds.window_size):
            classes = set(int(c) for c in np.unique(rec.masks[t]))
            open_classes = {c for c in classes if budget.get(c, 0) < per_class}
            if not open_classes:
                continue
            mask = rec.masks[t].copy()
            for c in classes - open_classes:
                mask[mask == c] = -1
            picked.append((ds.clip(i).features[t], mask))
            for c in open_classes:
                budget[c] = budget.get(c, 0) + 1
    if not picked:
        raise DSGError("no annotated training frames available for prototypes")
    return picked


@dataclass
class SegmentationReport:
    scores: object
    mean_nmi: float
    maps: list


def _render_per_frame(graph, assignment, bank, ds: ClipDataset, index: int, sg):
    """Re-label clusters frame by frame from that frame's pooled
    features, then render with the per-frame labels."""
    from .clustering import ClusterAssignment, PooledSceneGraph
    from .prototypes import SegmentationMap

    n = ds.n
    rec = ds.clips[index]
    frames = []
    for t in range(graph.w):
        c_t = assignment.C[t * n : (t + 1) * n]
        x_t = graph.node_features[t * n : (t + 1) * n]
        sg_t = PooledSceneGraph(X_pool=c_t.T @ x_t, A_pool=sg.A_pool,
                                W_pool=sg.W_pool, frame_span=(t, t + 1))
        labels_t = label_clusters(sg_t, bank)
        frame_assignment = ClusterAssignment(C=c_t, K=assignment.K)
        frames.append(render_segmentation(frame_assignment, labels_t, ds.grid).labels[0])
    return SegmentationMap(labels=np.stack(frames), grid=ds.grid,
                           frame_ids=rec.frame_ids)


def segment_split(model: DSGModel, ds: ClipDataset, cache: GraphCache, split: str,
                  support_per_class: int = 5, per_frame_labels: bool = False) -> SegmentationReport:
    """Cluster + label + render every clip of a split; scores the maps
    against ground-truth masks and planted regions where available.

    By default a window's cluster labels apply to all of its frames;
    `per_frame_labels` re-scores each frame's pooled features against
    the prototype bank instead.
    """
    bank = build_prototypes(support_frames(ds, support_per_class))
    indices = ds.split_indices(split)
    if not indices:
        raise DSGError(f"split {split!r} is empty")
    pred_maps, gt_maps, nmis, maps = [], [], [], []
    for i in indices:
        graph = cache.graph(i)
        sg, assignment = model.scene_graph(graph)
        labels = label_clusters(sg, bank)
        if per_frame_labels:
            seg = _render_per_frame(graph, assignment, bank, ds, i, sg)
        else:
            seg = render_segmentation(assignment, labels, ds.grid,
                                      frame_ids=ds.clips[i].frame_ids)
        maps.append((ds.clips[i].id, seg, sg))
        rec = ds.clips[i]
        if rec.masks is not None:
            pred_maps.append(seg.flat())
            gt_maps.append(rec.masks)
        planted = rec.regions if rec.regions is not None else rec.masks
        if planted is not None:
            nmis.append(nmi(assignment.hard(), planted.reshape(-1)))
    scores = None
    if gt_maps:
        scores = segmentation_metrics(
            np.concatenate(pred_maps), np.concatenate(gt_maps), ds.class_groups
        )
    mean_nmi = float(np.mean(nmis)) if nmis else float("nan")
    return SegmentationReport(scores=scores, mean_nmi=mean_nmi, maps=maps)
