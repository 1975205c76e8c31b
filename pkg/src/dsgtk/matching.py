"""Sparse correspondences between consecutive frames.

The built-in matcher is mutual nearest neighbor over cosine similarity
with a confidence floor; externally computed matches can be imported
from JSON-lines files. Either way the result is a partial matching:
each patch appears in at most one pair per side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DSGError
from .graphs import l2_normalize_rows


@dataclass
class MatchList:
    """Pairs (patch_index_t, patch_index_t+1, confidence in [0, 1])."""

    pairs: list[tuple[int, int, float]] = field(default_factory=list)

    def __len__(self):
        return len(self.pairs)

    def validate(self, context: str = "match list"):
        left = [i for i, _, _ in self.pairs]
        right = [j for _, j, _ in self.pairs]
        for side, name in ((left, "left"), (right, "right")):
            seen = set()
            for idx in side:
                if idx in seen:
                    raise DSGError(f"{context}: duplicate {name} patch index {idx}")
                seen.add(idx)


def mutual_nn_match(feat_a: np.ndarray, feat_b: np.ndarray, min_conf: float = 0.7) -> MatchList:
    """Pairs (i, j) where i and j are each other's cosine nearest
    neighbor and the similarity clears `min_conf`.

    Argmax ties break toward the lowest index. Confidence is the cosine
    similarity clamped to [0, 1].
    """
    a = np.asarray(feat_a, dtype=np.float64)
    b = np.asarray(feat_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DSGError(f"feature dimension mismatch: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DSGError("matcher features contain non-finite values")
    an = l2_normalize_rows(a)
    bn = l2_normalize_rows(b)
    ab_idx, ab_sim = kernels.nearest_neighbors(an, bn)
    ba_idx, _ = kernels.nearest_neighbors(bn, an)
    pairs = []
    for i in range(a.shape[0]):
        j = int(ab_idx[i])
        if int(ba_idx[j]) == i and ab_sim[i] >= min_conf:
            pairs.append((i, j, float(np.clip(ab_sim[i], 0.0, 1.0))))
    return MatchList(pairs=pairs)


def match_consecutive(frames: np.ndarray, min_conf: float = 0.7) -> list[MatchList]:
    """Mutual-NN matches for each consecutive pair of a (w, n, d) stack."""
    return [
        mutual_nn_match(frames[t], frames[t + 1], min_conf=min_conf)
        for t in range(frames.shape[0] - 1)
    ]


def save_matches(path, matches: dict[int, MatchList]):
    """JSON lines, one record per frame pair: {"t": int, "pairs": [[i, j, conf], ...]}."""
    path = Path(path)
    with open(path, "w") as fh:
        for t in sorted(matches):
            record = {"t": int(t), "pairs": [[int(i), int(j), float(c)] for i, j, c in matches[t].pairs]}
            fh.write(json.dumps(record) + "\n")


def load_matches(path) -> dict[int, MatchList]:
    """Parse a match file, enforcing the partial-matching invariant.

    Returns MatchLists keyed by the earlier frame index t of each
    (t, t+1) pair.
    """
    path = Path(path)
    out: dict[int, MatchList] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                t = int(record["t"])
                pairs = [(int(i), int(j), float(c)) for i, j, c in record["pairs"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise DSGError(f"{path}:{lineno}: malformed match record ({exc})") from exc
            if t in out:
                raise DSGError(f"{path}:{lineno}: duplicate frame pair t={t}")
            mlist = MatchList(pairs=pairs)
            mlist.validate(context=f"{path}:{lineno}")
            out[t] = mlist
    return out
