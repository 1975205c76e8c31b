"""Keypoint matching between consecutive frames, binned to patch cells.

ORB keypoints with Hamming brute-force cross-check matching stand in
for a learned matcher. Keypoint pixel coordinates map to patch indices
by floor division by the patch size; when several keypoint matches land
in the same patch cell the highest-confidence one wins, which also
enforces the partial-matching invariant the toolkit's loader checks.
Confidence is 1 - hamming_distance / 256, clipped to [0, 1].
"""

from __future__ import annotations

import logging

import numpy as np

from .extract import INPUT_SIZE

log = logging.getLogger(__name__)


def matcher_available() -> bool:
    try:
        import cv2  # noqa: F401
    except ImportError:
        return False
    return True


def _keypoint_patch(x: float, y: float, grid) -> int:
    rows, cols = grid
    ph, pw = INPUT_SIZE // rows, INPUT_SIZE // cols
    r = min(int(y) // ph, rows - 1)
    c = min(int(x) // pw, cols - 1)
    return r * cols + c


def match_frame_pair(frame_a, frame_b, grid, n_features=500) -> list[tuple[int, int, float]]:
    """Patch-level correspondences between two PIL frames."""
    import cv2

    orb = cv2.ORB_create(nfeatures=n_features)
    gray_a = cv2.cvtColor(np.asarray(frame_a), cv2.COLOR_RGB2GRAY)
    gray_b = cv2.cvtColor(np.asarray(frame_b), cv2.COLOR_RGB2GRAY)
    kp_a, desc_a = orb.detectAndCompute(gray_a, None)
    kp_b, desc_b = orb.detectAndCompute(gray_b, None)
    if desc_a is None or desc_b is None or not len(kp_a) or not len(kp_b):
        return []
    matcher = cv2.BFMatcher(cv2.NORM_HAMMING, crossCheck=True)
    raw = matcher.match(desc_a, desc_b)

    candidates = []
    for m in raw:
        pa = _keypoint_patch(*kp_a[m.queryIdx].pt, grid)
        pb = _keypoint_patch(*kp_b[m.trainIdx].pt, grid)
        conf = float(np.clip(1.0 - m.distance / 256.0, 0.0, 1.0))
        candidates.append((conf, pa, pb))
    # highest confidence first; one match per patch on each side
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_a, used_b = set(), set()
    pairs = []
    for conf, pa, pb in candidates:
        if pa in used_a or pb in used_b:
            continue
        used_a.add(pa)
        used_b.add(pb)
        pairs.append((pa, pb, conf))
    pairs.sort(key=lambda t: t[0])
    return pairs
