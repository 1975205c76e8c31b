"""Dataset container format and synthetic data generation.

On-disk layout of a dataset directory:

    manifest.json            clip list, labels, splits, declared dims
    blobs/<id>.dsgf          one binary feature blob per clip
    annotations/<id>.json    optional patch-level class masks per frame
    matches/<id>.jsonl       optional temporal correspondences
    class_groups.json        optional class -> anatomy|instrument|misc

Feature blob: magic ``DSGF``, version u16, w/n/d u32 little-endian, then
w*n*d float32 little-endian, row-major (frame-major, patch-minor).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import DSGError
from .graphs import FeatureClip
from .matching import MatchList, load_matches, save_matches

BLOB_MAGIC = b"DSGF"
BLOB_VERSION = 1


def write_feature_blob(path, features: np.ndarray):
    features = np.asarray(features)
    if features.ndim != 3:
        raise DSGError(f"blob features must be (w, n, d), got {features.shape}")
    w, n, d = features.shape
    with open(path, "wb") as fh:
        fh.write(BLOB_MAGIC)
        fh.write(struct.pack("<HIII", BLOB_VERSION, w, n, d))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def read_feature_blob(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != BLOB_MAGIC:
        raise DSGError(f"{path}: not a feature blob (bad magic)")
    if len(data) < 18:
        raise DSGError(f"{path}: truncated header")
    version, w, n, d = struct.unpack_from("<HIII", data, 4)
    if version != BLOB_VERSION:
        raise DSGError(f"{path}: unsupported blob version {version}")
    expected = 18 + w * n * d * 4
    if len(data) != expected:
        raise DSGError(f"{path}: payload is {len(data) - 18} bytes, expected {expected - 18}")
    return np.frombuffer(data[18:], dtype="<f4").reshape(w, n, d).astype(np.float32)


# ---------------------------------------------------------------------------
# dataset container


@dataclass
class ClipRecord:
    id: str
    label: int | None
    split: str
    frame_ids: list[int]
    features: np.ndarray  # (w, n, d)
    masks: np.ndarray | None = None  # (w, n) class indices
    regions: np.ndarray | None = None  # (w, n) planted cluster ids (synthetic only)
    matches: dict[int, MatchList] | None = None


@dataclass
class ClipDataset:
    phase_count: int
    window_size: int
    grid: tuple[int, int]
    feature_dim: int
    clips: list[ClipRecord] = field(default_factory=list)
    class_groups: dict[int, str] | None = None

    @property
    def n(self) -> int:
        return self.grid[0] * self.grid[1]

    def split_indices(self, split: str) -> list[int]:
        return [i for i, c in enumerate(self.clips) if c.split == split]

    def clip(self, index: int) -> FeatureClip:
        rec = self.clips[index]
        return FeatureClip(
            features=np.asarray(rec.features, dtype=np.float64),
            frame_ids=list(rec.frame_ids),
            grid=self.grid,
            phase_label=rec.label,
        )

    def match_lists(self, index: int) -> list[MatchList] | None:
        """Per-frame-pair matches in window order, or None when absent."""
        rec = self.clips[index]
        if rec.matches is None:
            return None
        return [rec.matches.get(t, MatchList()) for t in range(self.window_size - 1)]

    def summary(self) -> str:
        splits = {}
        for c in self.clips:
            splits[c.split] = splits.get(c.split, 0) + 1
        split_str = ", ".join(f"{k}={v}" for k, v in sorted(splits.items()))
        return (
            f"clips={len(self.clips)} ({split_str}), phases={self.phase_count}, "
            f"w={self.window_size}, n={self.n}, d={self.feature_dim}"
        )

    # -- persistence --------------------------------------------------------

    def save(self, root):
        root = Path(root)
        (root / "blobs").mkdir(parents=True, exist_ok=True)
        entries = []
        for rec in self.clips:
            blob_rel = f"blobs/{rec.id}.dsgf"
            write_feature_blob(root / blob_rel, rec.features)
            entry = {
                "id": rec.id,
                "blob": blob_rel,
                "label": rec.label,
                "split": rec.split,
                "frame_ids": [int(f) for f in rec.frame_ids],
                "annotation": None,
                "matches": None,
            }
            if rec.masks is not None:
                (root / "annotations").mkdir(exist_ok=True)
                ann_rel = f"annotations/{rec.id}.json"
                entry["annotation"] = ann_rel
                records = []
                for t in range(self.window_size):
                    record = {
                        "frame_id": int(rec.frame_ids[t]),
                        "grid": list(self.grid),
                        "mask": [int(v) for v in rec.masks[t]],
                    }
                    if rec.regions is not None:
                        record["regions"] = [int(v) for v in rec.regions[t]]
                    records.append(record)
                (root / ann_rel).write_text(json.dumps(records))
            if rec.matches is not None:
                (root / "matches").mkdir(exist_ok=True)
                match_rel = f"matches/{rec.id}.jsonl"
                entry["matches"] = match_rel
                save_matches(root / match_rel, rec.matches)
            entries.append(entry)
        manifest = {
            "version": 1,
            "phase_count": self.phase_count,
            "window_size": self.window_size,
            "grid": list(self.grid),
            "feature_dim": self.feature_dim,
            "clips": entries,
        }
        (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
        if self.class_groups is not None:
            groups = {str(k): v for k, v in sorted(self.class_groups.items())}
            (root / "class_groups.json").write_text(json.dumps(groups, indent=2))


def _load_annotation(path, w, n, grid) -> tuple[np.ndarray, np.ndarray | None]:
    try:
        records = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DSGError(f"{path}: unreadable annotation ({exc})") from exc
    if len(records) != w:
        raise DSGError(f"{path}: {len(records)} frame records, expected {w}")
    masks = np.zeros((w, n), dtype=np.int64)
    regions = None
    for t, record in enumerate(records):
        if tuple(record.get("grid", grid)) != tuple(grid):
            raise DSGError(f"{path}: frame {t} grid {record['grid']} != dataset grid {list(grid)}")
        mask = record.get("mask")
        if not isinstance(mask, list) or len(mask) != n:
            raise DSGError(f"{path}: frame {t} mask does not cover {n} patches")
        masks[t] = np.asarray(mask, dtype=np.int64)
        if "regions" in record:
            if regions is None:
                regions = np.zeros((w, n), dtype=np.int64)
            regions[t] = np.asarray(record["regions"], dtype=np.int64)
    if masks.min() < 0:
        raise DSGError(f"{path}: negative class index in mask")
    return masks, regions


def load_dataset(root) -> ClipDataset:
    """Load and validate a dataset directory.

    Dimension and label-range checks run at load; every error names the
    offending file or record.
    """
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DSGError(f"{manifest_path}: missing manifest")
    try:
        manifest = json.loads(manifest_path.read_text())
        phase_count = int(manifest["phase_count"])
        window_size = int(manifest["window_size"])
        grid = (int(manifest["grid"][0]), int(manifest["grid"][1]))
        feature_dim = int(manifest["feature_dim"])
        entries = manifest["clips"]
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise DSGError(f"{manifest_path}: malformed manifest ({exc})") from exc

    n = grid[0] * grid[1]
    ds = ClipDataset(
        phase_count=phase_count, window_size=window_size, grid=grid, feature_dim=feature_dim
    )
    groups_path = root / "class_groups.json"
    if groups_path.exists():
        raw = json.loads(groups_path.read_text())
        ds.class_groups = {int(k): str(v) for k, v in raw.items()}

    for entry in entries:
        cid = entry.get("id", "<unnamed>")
        blob_path = root / entry["blob"]
        if not blob_path.exists():
            raise DSGError(f"clip {cid}: missing blob {blob_path}")
        features = read_feature_blob(blob_path)
        if features.shape != (window_size, n, feature_dim):
            raise DSGError(
                f"clip {cid}: blob {blob_path} has shape {features.shape}, "
                f"manifest declares {(window_size, n, feature_dim)}"
            )
        label = entry.get("label")
        if label is not None:
            label = int(label)
            if not 0 <= label < phase_count:
                raise DSGError(f"clip {cid}: label {label} out of range for {phase_count} phases")
        frame_ids = [int(f) for f in entry.get("frame_ids", range(window_size))]
        if len(frame_ids) != window_size:
            raise DSGError(f"clip {cid}: {len(frame_ids)} frame ids for {window_size} frames")
        masks = regions = None
        if entry.get("annotation"):
            masks, regions = _load_annotation(root / entry["annotation"], window_size, n, grid)
        matches = None
        if entry.get("matches"):
            matches = load_matches(root / entry["matches"])
            for t, mlist in matches.items():
                if not 0 <= t < window_size - 1:
                    raise DSGError(f"clip {cid}: match frame pair t={t} outside window")
                for i, j, _ in mlist.pairs:
                    if not (0 <= i < n and 0 <= j < n):
                        raise DSGError(f"clip {cid}: match index ({i}, {j}) out of range")
        ds.clips.append(
            ClipRecord(
                id=str(cid), label=label, split=str(entry.get("split", "train")),
                frame_ids=frame_ids, features=features, masks=masks,
                regions=regions, matches=matches,
            )
        )
    return ds


def truncate_clips(ds: ClipDataset, window_size: int) -> ClipDataset:
    """Keep only the last `window_size` frames of every clip (labels are
    attributed to the last frame, so they are preserved)."""
    if not 1 <= window_size <= ds.window_size:
        raise DSGError(f"cannot truncate window {ds.window_size} to {window_size}")
    drop = ds.window_size - window_size
    out = ClipDataset(
        phase_count=ds.phase_count, window_size=window_size, grid=ds.grid,
        feature_dim=ds.feature_dim, class_groups=ds.class_groups,
    )
    for rec in ds.clips:
        matches = None
        if rec.matches is not None:
            matches = {
                t - drop: mlist for t, mlist in rec.matches.items() if t >= drop
            }
        out.clips.append(
            ClipRecord(
                id=rec.id, label=rec.label, split=rec.split,
                frame_ids=rec.frame_ids[drop:],
                features=rec.features[drop:],
                masks=None if rec.masks is None else rec.masks[drop:],
                regions=None if rec.regions is None else rec.regions[drop:],
                matches=matches,
            )
        )
    return out


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass
class SyntheticSpec:
    """Planted-structure dataset description.

    `noise` is the expected norm of the per-patch feature perturbation
    (persistent across frames, plus a small fresh per-frame jitter), so
    cosine similarities stay near 1 within a planted region.
    """

    n_classes: int = 3
    clusters_per_frame: int = 4
    feature_dim: int = 32
    noise: float = 0.1
    rule: str = "combination"  # combination | temporal-marker | low-saliency
    window_size: int = 4
    clips: int = 200
    grid: tuple[int, int] = (4, 4)
    seed: int = 0
    region_spread: float = 0.8
    jitter_fraction: float = 0.2
    saliency_offset: float = 0.6
    saliency_leak: float = 0.15
    val_fraction: float = 0.15
    test_fraction: float = 0.25

    def __post_init__(self):
        if self.feature_dim < self.n_classes + self.clusters_per_frame + 1:
            raise DSGError(
                f"feature dim {self.feature_dim} too small to orthogonalize "
                f"{self.n_classes} classes and {self.clusters_per_frame} regions"
            )
        if self.rule not in ("combination", "temporal-marker", "low-saliency"):
            raise DSGError(f"unknown phase rule {self.rule!r}")
        if self.rule == "temporal-marker" and self.window_size < 4:
            raise DSGError("temporal-marker rule needs a window of at least 4 frames")
        if self.n_classes < 2:
            raise DSGError("need at least 2 classes")
        if self.grid[0] * self.grid[1] < self.clusters_per_frame:
            raise DSGError("grid too small for the requested regions")


def _orthonormal_directions(rng, d, count) -> np.ndarray:
    """(count, d) rows from the QR factorization of a Gaussian draw."""
    g = rng.standard_normal((d, count))
    q, _ = np.linalg.qr(g)
    return q.T[:count]


def _unit_noise(rng, d) -> np.ndarray:
    g = rng.standard_normal(d)
    return g / np.linalg.norm(g)


def _strip_layout(grid, regions) -> np.ndarray:
    """Assign each patch to one of `regions` contiguous column strips."""
    rows, cols_n = grid
    n = rows * cols_n
    bounds = np.linspace(0, cols_n, regions + 1)
    patch_region = np.zeros(n, dtype=np.int64)
    for p in range(n):
        col = p % cols_n
        patch_region[p] = min(int(np.searchsorted(bounds, col, side="right")) - 1, regions - 1)
    return patch_region


def _identity_matches(masks: np.ndarray) -> dict[int, MatchList]:
    """Planted identity correspondences wherever the class persists."""
    w, n = masks.shape
    out = {}
    for t in range(w - 1):
        pairs = [(p, p, 1.0) for p in range(n) if masks[t, p] == masks[t + 1, p]]
        out[t] = MatchList(pairs=pairs)
    return out


def _phase_combinations(n_classes: int) -> list[tuple[int, ...]]:
    combos = []
    for size in range(2, n_classes + 1):
        combos.extend(combinations(range(n_classes), size))
    return combos


def generate_synthetic(spec: SyntheticSpec) -> ClipDataset:
    """Planted dataset: orthonormal class means, region-specific offsets
    so spatially distinct regions of one class stay distinguishable, and
    identity temporal correspondences.

    The phase rule determines labels:
      combination:     which class-combination is present in the clip
      temporal-marker: whether the marker class appeared >= 2 frames
                       before the window end (marker never occupies the
                       last frame)
      low-saliency:    whether a small, weakly separated marker class is
                       present
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.feature_dim
    n = spec.grid[0] * spec.grid[1]
    w = spec.window_size
    regions = spec.clusters_per_frame

    dirs = _orthonormal_directions(rng, d, spec.n_classes + regions + 1)
    class_means = dirs[: spec.n_classes]
    region_offsets = dirs[spec.n_classes : spec.n_classes + regions]
    extra_dir = dirs[-1]
    patch_region = _strip_layout(spec.grid, regions)

    if spec.rule == "combination":
        combos = _phase_combinations(spec.n_classes)
        phase_count = len(combos)
    else:
        phase_count = 2
    marker_class = spec.n_classes - 1
    if spec.rule == "low-saliency":
        # weakly separated from class 0: high cosine, below within-region level
        marker_mean = class_means[0] + spec.saliency_offset * extra_dir
        marker_mean /= np.linalg.norm(marker_mean)
        class_means = class_means.copy()
        class_means[marker_class] = marker_mean

    def region_mean(cls: int, region: int) -> np.ndarray:
        v = class_means[cls] + spec.region_spread * region_offsets[region]
        return v / np.linalg.norm(v)

    ds = ClipDataset(
        phase_count=phase_count, window_size=w, grid=spec.grid, feature_dim=d,
        class_groups={c: ("instrument" if c == marker_class else "anatomy")
                      for c in range(spec.n_classes)},
    )

    n_val = int(round(spec.clips * spec.val_fraction))
    n_test = int(round(spec.clips * spec.test_fraction))
    splits = ["train"] * (spec.clips - n_val - n_test) + ["val"] * n_val + ["test"] * n_test
    rng.shuffle(splits)

    for ci in range(spec.clips):
        if spec.rule == "combination":
            combo_idx = int(rng.integers(len(combos)))
            combo = list(combos[combo_idx])
            label = combo_idx
            region_class = [combo[r % len(combo)] for r in range(regions)]
            rng.shuffle(region_class)
            class_grid = np.array([region_class[patch_region[p]] for p in range(n)])
            masks = np.tile(class_grid, (w, 1))
        elif spec.rule == "temporal-marker":
            bg_classes = list(range(spec.n_classes - 1))
            region_class = [bg_classes[r % len(bg_classes)] for r in range(regions)]
            rng.shuffle(region_class)
            class_grid = np.array([region_class[patch_region[p]] for p in range(n)])
            masks = np.tile(class_grid, (w, 1))
            label = int(rng.integers(2))
            pos = int(rng.integers(0, w - 2)) if label == 1 else w - 2
            marked_region = int(rng.integers(regions))
            masks[pos, patch_region == marked_region] = marker_class
        else:  # low-saliency
            bg_classes = list(range(spec.n_classes - 1))
            region_class = [bg_classes[r % len(bg_classes)] for r in range(regions)]
            rng.shuffle(region_class)
            # the marker hides inside a class-0 region: marker patches sit
            # near unit(mu_0 + delta u), the region's remaining patches near
            # unit(mu_0 - delta u), and marker-absent clips place the whole
            # region at the midpoint (the region's feature sum is nearly
            # label-invariant, so a classifier over merged clusters has
            # almost nothing to read). With one more natural component than
            # available clusters, purely unsupervised clustering prefers to
            # merge the two smallest components (marker + host remainder),
            # while task guidance must keep the marker separate.
            marked_slot = int(rng.integers(regions))
            region_class[marked_slot] = 0
            class_grid = np.array([region_class[patch_region[p]] for p in range(n)])
            masks = np.tile(class_grid, (w, 1))
            label = int(rng.integers(2))
            marker_cells = np.where(patch_region == marked_slot)[0]
            half = len(marker_cells) // 2
            if label == 1:
                masks[:, marker_cells[half:]] = marker_class

        region_ids = np.tile(patch_region, (w, 1))
        persistent = spec.noise * np.stack([_unit_noise(rng, d) for _ in range(n)])
        mean_grid = np.zeros((n, d))
        for p in range(n):
            mean_grid[p] = region_mean(int(masks[0, p]), int(patch_region[p]))
        if spec.rule == "low-saliency":
            delta = spec.saliency_offset
            hi = class_means[marker_class]  # unit(mu_0 + delta u)
            lo = class_means[0] - delta * extra_dir
            lo /= np.linalg.norm(lo)
            mid = 0.5 * (hi + lo)
            offset = spec.region_spread * region_offsets[marked_slot]
            if label == 1:
                # the small leak term keeps a weak pooled-level signal so
                # the classifier has an entry gradient; full accuracy still
                # requires the clustering to separate the marker patches
                for p in marker_cells[half:]:
                    mean_grid[p] = (1.0 + spec.saliency_leak) * hi + offset
                for p in marker_cells[:half]:
                    mean_grid[p] = lo + offset
            else:
                for p in marker_cells:
                    mean_grid[p] = mid + offset

        features = np.zeros((w, n, d))
        for t in range(w):
            for p in range(n):
                base = mean_grid[p]
                if spec.rule == "temporal-marker" and masks[t, p] != masks[0, p]:
                    base = region_mean(int(masks[t, p]), int(patch_region[p]))
                jitter = spec.jitter_fraction * spec.noise * _unit_noise(rng, d)
                features[t, p] = base + persistent[p] + jitter

        ds.clips.append(
            ClipRecord(
                id=f"clip_{ci:04d}", label=label, split=splits[ci],
                frame_ids=list(range(ci * w, ci * w + w)),
                features=features.astype(np.float32),
                masks=masks, regions=region_ids,
                matches=_identity_matches(masks),
            )
        )
    return ds
