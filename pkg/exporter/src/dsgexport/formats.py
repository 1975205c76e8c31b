"""Writers for the toolkit's interchange formats.

Feature blob: magic ``DSGF``, version u16, w/n/d u32 little-endian,
then w*n*d float32 little-endian, frame-major. Match file: JSON lines,
one ``{"t": int, "pairs": [[i, j, conf], ...]}`` record per frame pair.
"""

import json
import struct
from pathlib import Path

import numpy as np

BLOB_MAGIC = b"DSGF"
BLOB_VERSION = 1


def write_feature_blob(path, features: np.ndarray):
    features = np.asarray(features)
    if features.ndim != 3:
        raise ValueError(f"blob features must be (w, n, d), got {features.shape}")
    w, n, d = features.shape
    with open(path, "wb") as fh:
        fh.write(BLOB_MAGIC)
        fh.write(struct.pack("<HIII", BLOB_VERSION, w, n, d))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def write_matches(path, matches: dict):
    with open(path, "w") as fh:
        for t in sorted(matches):
            record = {"t": int(t),
                      "pairs": [[int(i), int(j), float(c)] for i, j, c in matches[t]]}
            fh.write(json.dumps(record) + "\n")


def write_manifest(path, phase_count, window_size, grid, feature_dim, clips):
    manifest = {
        "version": 1,
        "phase_count": int(phase_count),
        "window_size": int(window_size),
        "grid": [int(grid[0]), int(grid[1])],
        "feature_dim": int(feature_dim),
        "clips": clips,
    }
    Path(path).write_text(json.dumps(manifest, indent=2))
