"""Export driver: frames directory -> DSGF dataset directory."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats, keypoints
from .extract import ExportError, build_extractor, load_frame

log = logging.getLogger(__name__)

FRAME_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tiff"}


@dataclass
class ExportJob:
    frames_dir: Path
    out_dir: Path
    extractor: str = "patch-stats"
    grid: tuple[int, int] = (4, 4)  # patch-stats only; vit-b16 is fixed at 14x14
    dim: int = 32  # patch-stats only; vit-b16 is fixed at 768
    window: int = 4
    stride: int = 4
    weights: str = "none"
    with_matches: bool = True
    labels_csv: Path | None = None
    split: str = "test"
    seed: int = 0


def list_frames(frames_dir) -> list[Path]:
    frames_dir = Path(frames_dir)
    if not frames_dir.is_dir():
        raise ExportError(f"frame directory {frames_dir} does not exist")
    frames = sorted(p for p in frames_dir.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    if not frames:
        raise ExportError(f"no frames found in {frames_dir}")
    return frames


def load_labels(path) -> dict[str, int]:
    """CSV with two columns: frame (stem or index) and phase label."""
    labels: dict[str, int] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("frame", "frame_id"):
                continue
            if len(row) < 2:
                raise ExportError(f"{path}: label row needs two columns, got {row}")
            labels[row[0].strip()] = int(row[1])
    return labels


def _frame_label(labels, frame: Path, index: int):
    if labels is None:
        return None
    for key in (frame.stem, frame.name, str(index)):
        if key in labels:
            return labels[key]
    return None


def export(job: ExportJob) -> dict:
    """Run the export; returns a small summary dict."""
    frames = list_frames(job.frames_dir)
    if job.window < 1 or job.stride < 1:
        raise ExportError("window and stride must be positive")
    if len(frames) < job.window:
        raise ExportError(f"{len(frames)} frames cannot fill a window of {job.window}")

    extractor = build_extractor(job.extractor, grid=job.grid, dim=job.dim,
                                weights=job.weights, seed=job.seed)
    labels = load_labels(job.labels_csv) if job.labels_csv else None

    out = Path(job.out_dir)
    (out / "blobs").mkdir(parents=True, exist_ok=True)

    want_matches = job.with_matches
    if want_matches and not keypoints.matcher_available():
        log.warning("keypoint matcher unavailable (no cv2); skipping match files")
        want_matches = False
    if want_matches:
        (out / "matches").mkdir(exist_ok=True)

    images: dict[int, object] = {}
    features: dict[int, object] = {}
    pair_matches: dict[int, list] = {}

    def image(i):
        if i not in images:
            images[i] = load_frame(frames[i])
        return images[i]

    def feats(i):
        if i not in features:
            vec = extractor.extract(image(i))
            n = extractor.grid[0] * extractor.grid[1]
            if vec.shape != (n, extractor.dim):
                raise ExportError(
                    f"extractor returned {vec.shape}, expected {(n, extractor.dim)}"
                )
            features[i] = vec
        return features[i]

    def matches_for(i):
        if i not in pair_matches:
            pair_matches[i] = keypoints.match_frame_pair(
                image(i), image(i + 1), extractor.grid
            )
        return pair_matches[i]

    entries = []
    clip_index = 0
    max_label = -1
    for start in range(0, len(frames) - job.window + 1, job.stride):
        window = list(range(start, start + job.window))
        clip_id = f"clip_{clip_index:04d}"
        stack = np.stack([feats(i) for i in window])
        blob_rel = f"blobs/{clip_id}.dsgf"
        formats.write_feature_blob(out / blob_rel, stack)

        label = _frame_label(labels, frames[window[-1]], window[-1])
        if label is not None:
            max_label = max(max_label, label)
        entry = {
            "id": clip_id,
            "blob": blob_rel,
            "label": label,
            "split": job.split,
            "frame_ids": window,
            "annotation": None,
            "matches": None,
        }
        if want_matches:
            match_rel = f"matches/{clip_id}.jsonl"
            formats.write_matches(
                out / match_rel,
                {t: matches_for(window[t]) for t in range(job.window - 1)},
            )
            entry["matches"] = match_rel
        entries.append(entry)
        clip_index += 1

    phase_count = max_label + 1 if max_label >= 0 else 1
    formats.write_manifest(
        out / "manifest.json", phase_count, job.window, extractor.grid,
        extractor.dim, entries,
    )
    return {
        "clips": clip_index,
        "frames": len(frames),
        "grid": extractor.grid,
        "dim": extractor.dim,
        "matches": want_matches,
    }
