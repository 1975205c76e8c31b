"""Evaluation metrics: phase accuracy and F1, patch-wise segmentation
accuracy (PAC) and IoU with subgroup means, and normalized mutual
information for comparing clusterings against planted structure.

IoU is pooled over the whole evaluation set per class (dataset-level
IoU), not averaged per frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DSGError


def confusion_matrix(preds, gts, num_classes: int) -> np.ndarray:
    preds = np.asarray(preds, dtype=np.int64).ravel()
    gts = np.asarray(gts, dtype=np.int64).ravel()
    if preds.shape != gts.shape:
        raise DSGError(f"length mismatch: {preds.shape[0]} predictions vs {gts.shape[0]} labels")
    if preds.size == 0:
        raise DSGError("no items to score")
    if preds.min() < 0 or gts.min() < 0 or max(preds.max(), gts.max()) >= num_classes:
        raise DSGError(f"class index out of range for {num_classes} classes")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (gts, preds), 1)
    return cm


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom > 0 else 0.0


def phase_metrics(preds, gts) -> tuple[float, float]:
    """(accuracy, macro F1). Macro F1 averages per-class F1 over the
    classes present in the ground truth."""
    preds = np.asarray(preds, dtype=np.int64).ravel()
    gts = np.asarray(gts, dtype=np.int64).ravel()
    num_classes = int(max(preds.max(), gts.max())) + 1
    cm = confusion_matrix(preds, gts, num_classes)
    accuracy = float(np.trace(cm)) / float(cm.sum())
    f1s = []
    for cls in range(num_classes):
        tp = int(cm[cls, cls])
        fp = int(cm[:, cls].sum()) - tp
        fn = int(cm[cls, :].sum()) - tp
        if tp + fn == 0:  # class absent from ground truth
            continue
        f1s.append(_f1_from_counts(tp, fp, fn))
    return accuracy, float(np.mean(f1s))


def micro_f1(preds, gts) -> float:
    """Micro-averaged F1; equals accuracy for single-label problems but
    reported separately for transparency."""
    preds = np.asarray(preds, dtype=np.int64).ravel()
    gts = np.asarray(gts, dtype=np.int64).ravel()
    num_classes = int(max(preds.max(), gts.max())) + 1
    cm = confusion_matrix(preds, gts, num_classes)
    tp = int(np.trace(cm))
    total = int(cm.sum())
    return _f1_from_counts(tp, total - tp, total - tp)


@dataclass
class SegmentationScores:
    pac: float
    miou: float
    miou_ana: float
    miou_ins: float
    per_class_iou: dict[int, float] = field(default_factory=dict)


def segmentation_metrics(pred_maps, gt_maps, class_groups=None) -> SegmentationScores:
    """Patch-wise accuracy and dataset-level IoU over stacked maps.

    `pred_maps` / `gt_maps` are arrays (or lists of arrays) of class
    indices with identical shapes. `class_groups` maps class index to
    "anatomy" | "instrument" | "misc"; subgroup means cover only their
    classes. Classes absent from both prediction and ground truth are
    excluded from every mean; empty subgroups come back as NaN.
    """
    pred = np.concatenate([np.asarray(m, dtype=np.int64).ravel() for m in np.atleast_1d(pred_maps)])
    gt = np.concatenate([np.asarray(m, dtype=np.int64).ravel() for m in np.atleast_1d(gt_maps)])
    if pred.shape != gt.shape:
        raise DSGError(f"shape mismatch: {pred.shape[0]} predicted vs {gt.shape[0]} gt patches")
    if pred.size == 0:
        raise DSGError("no patches to score")
    class_groups = class_groups or {}
    known = set(np.unique(gt)) | set(np.unique(pred))
    if class_groups:
        unknown = known - set(class_groups)
        if unknown:
            raise DSGError(f"classes {sorted(unknown)} missing from the class-group map")

    pac = float(np.mean(pred == gt))
    per_class: dict[int, float] = {}
    for cls in sorted(known):
        inter = int(np.sum((pred == cls) & (gt == cls)))
        union = int(np.sum((pred == cls) | (gt == cls)))
        if union > 0:
            per_class[cls] = inter / union

    def group_mean(group: str) -> float:
        vals = [iou for cls, iou in per_class.items() if class_groups.get(cls) == group]
        return float(np.mean(vals)) if vals else float("nan")

    miou = float(np.mean(list(per_class.values()))) if per_class else float("nan")
    return SegmentationScores(
        pac=pac,
        miou=miou,
        miou_ana=group_mean("anatomy"),
        miou_ins=group_mean("instrument"),
        per_class_iou=per_class,
    )


def nmi(labels_a, labels_b) -> float:
    """Normalized mutual information with arithmetic-mean normalization."""
    a = np.asarray(labels_a, dtype=np.int64).ravel()
    b = np.asarray(labels_b, dtype=np.int64).ravel()
    if a.shape != b.shape:
        raise DSGError("label arrays must have equal length")
    n = a.size
    if n == 0:
        raise DSGError("no labels")
    _, a_idx = np.unique(a, return_inverse=True)
    _, b_idx = np.unique(b, return_inverse=True)
    joint = np.zeros((a_idx.max() + 1, b_idx.max() + 1))
    np.add.at(joint, (a_idx, b_idx), 1.0)
    joint /= n
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)

    def entropy(p):
        p = p[p > 0]
        return float(-(p * np.log(p)).sum())

    h_a, h_b = entropy(pa), entropy(pb)
    nz = joint > 0
    outer = pa[:, None] * pb[None, :]
    mi = float((joint[nz] * np.log(joint[nz] / outer[nz])).sum())
    denom = 0.5 * (h_a + h_b)
    if denom == 0.0:  # both clusterings are single-cluster: identical by convention
        return 1.0
    return mi / denom
