"""Blob/manifest round trips, dataset validation, and the synthetic
generator's planted guarantees."""

import json

import numpy as np
import pytest

from dsgtk.data import (
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    read_feature_blob,
    truncate_clips,
    write_feature_blob,
)
from dsgtk.errors import DSGError
from dsgtk.graphs import build_adjacency
from dsgtk.matching import mutual_nn_match


class TestBlobs:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        feats = rng.standard_normal((3, 4, 8)).astype(np.float32)
        path = tmp_path / "clip.dsgf"
        write_feature_blob(path, feats)
        back = read_feature_blob(path)
        assert back.dtype == np.float32
        assert np.array_equal(back, feats)
        # writing what was read reproduces the file byte for byte
        path2 = tmp_path / "clip2.dsgf"
        write_feature_blob(path2, back)
        assert path.read_bytes() == path2.read_bytes()

    def test_truncated_blob_detected(self, tmp_path):
        path = tmp_path / "clip.dsgf"
        write_feature_blob(path, np.zeros((2, 2, 2), dtype=np.float32))
        data = path.read_bytes()
        path.write_bytes(data[:-4])  # drop one float
        with pytest.raises(DSGError, match="clip.dsgf"):
            read_feature_blob(path)

    def test_bad_magic_detected(self, tmp_path):
        path = tmp_path / "junk.dsgf"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(DSGError, match="bad magic"):
            read_feature_blob(path)


def small_spec(**kw):
    defaults = dict(n_classes=3, clusters_per_frame=4, feature_dim=32, noise=0.1,
                    window_size=4, clips=12, seed=5)
    defaults.update(kw)
    return SyntheticSpec(**defaults)


class TestSyntheticGenerator:
    def test_deterministic(self):
        a = generate_synthetic(small_spec())
        b = generate_synthetic(small_spec())
        for ra, rb in zip(a.clips, b.clips):
            assert np.array_equal(ra.features, rb.features)
            assert ra.label == rb.label

    def test_zero_noise_block_structure(self):
        ds = generate_synthetic(small_spec(noise=0.0, jitter_fraction=0.0))
        rec = ds.clips[0]
        graph = build_adjacency(np.asarray(rec.features[0], dtype=np.float64))
        dense = graph.dense()
        regions = rec.regions[0]
        # adjacency value depends only on the (region, region) pair
        for r in range(4):
            for s in range(4):
                vals = dense[np.ix_(regions == r, regions == s)]
                off_diag = vals[~np.eye(vals.shape[0], vals.shape[1], dtype=bool)] \
                    if r == s else vals.ravel()
                if len(off_diag):
                    assert np.allclose(off_diag, off_diag.flat[0], atol=1e-6)

    def test_matcher_recovers_identity(self):
        # noise 0.1, 3 classes, d=32: mutual-NN recovers >= 99% of patches
        ds = generate_synthetic(small_spec(clips=30))
        total = hits = 0
        for rec in ds.clips:
            feats = np.asarray(rec.features, dtype=np.float64)
            for t in range(ds.window_size - 1):
                m = mutual_nn_match(feats[t], feats[t + 1], min_conf=0.7)
                planted = {(i, j) for i, j, _ in rec.matches[t].pairs}
                got = {(i, j) for i, j, _ in m.pairs}
                hits += len(got & planted)
                total += len(planted)
        assert hits / total >= 0.99

    def test_masks_self_consistent(self):
        from dsgtk.metrics import segmentation_metrics

        ds = generate_synthetic(small_spec())
        rec = ds.clips[0]
        s = segmentation_metrics(rec.masks, rec.masks, ds.class_groups)
        assert s.pac == 1.0 and s.miou == 1.0

    def test_labels_below_phase_count(self):
        ds = generate_synthetic(small_spec(clips=40))
        assert all(0 <= c.label < ds.phase_count for c in ds.clips)

    def test_orthogonalization_needs_width(self):
        with pytest.raises(DSGError):
            SyntheticSpec(n_classes=3, clusters_per_frame=4, feature_dim=4)

    def test_temporal_marker_last_frames_clean(self):
        ds = generate_synthetic(small_spec(rule="temporal-marker", window_size=8, clips=30))
        marker = 2
        for rec in ds.clips:
            assert marker not in rec.masks[-1]
            marked_frames = [t for t in range(8) if marker in rec.masks[t]]
            assert len(marked_frames) == 1
            if rec.label == 1:
                assert marked_frames[0] <= 5
            else:
                assert marked_frames[0] == 6

    def test_low_saliency_marker_small_and_label_linked(self):
        ds = generate_synthetic(small_spec(rule="low-saliency", clips=30))
        marker = 2
        for rec in ds.clips:
            present = marker in rec.masks
            assert present == (rec.label == 1)
            if present:
                assert (rec.masks[0] == marker).sum() == 2


class TestDatasetIO:
    def test_save_load_round_trip(self, tmp_path):
        ds = generate_synthetic(small_spec())
        ds.save(tmp_path)
        back = load_dataset(tmp_path)
        assert back.summary() == ds.summary()
        assert back.class_groups == ds.class_groups
        for ra, rb in zip(ds.clips, back.clips):
            assert np.array_equal(ra.features, rb.features)
            assert np.array_equal(ra.masks, rb.masks)
            assert np.array_equal(ra.regions, rb.regions)
            assert ra.label == rb.label and ra.split == rb.split
            for t in ra.matches:
                assert ra.matches[t].pairs == rb.matches[t].pairs

    def test_missing_blob_named_in_error(self, tmp_path):
        ds = generate_synthetic(small_spec(clips=3))
        ds.save(tmp_path)
        (tmp_path / "blobs" / "clip_0001.dsgf").unlink()
        with pytest.raises(DSGError, match="clip_0001"):
            load_dataset(tmp_path)

    def test_dimension_mismatch_detected(self, tmp_path):
        ds = generate_synthetic(small_spec(clips=2))
        ds.save(tmp_path)
        write_feature_blob(tmp_path / "blobs" / "clip_0000.dsgf",
                           np.zeros((4, 16, 8), dtype=np.float32))
        with pytest.raises(DSGError, match="shape"):
            load_dataset(tmp_path)

    def test_label_out_of_range_detected(self, tmp_path):
        ds = generate_synthetic(small_spec(clips=2))
        ds.save(tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        manifest["clips"][0]["label"] = 99
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(DSGError, match="label 99"):
            load_dataset(tmp_path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DSGError, match="manifest"):
            load_dataset(tmp_path / "nope")

    def test_clip_accessor_builds_feature_clip(self):
        ds = generate_synthetic(small_spec())
        clip = ds.clip(0)
        assert clip.w == 4 and clip.n == 16 and clip.d == 32
        assert clip.phase_label == ds.clips[0].label


class TestTruncate:
    def test_truncate_keeps_last_frames(self):
        ds = generate_synthetic(small_spec())
        short = truncate_clips(ds, 2)
        assert short.window_size == 2
        for full, cut in zip(ds.clips, short.clips):
            assert np.array_equal(cut.features, full.features[2:])
            assert cut.frame_ids == full.frame_ids[2:]
            assert np.array_equal(cut.masks, full.masks[2:])
            assert cut.label == full.label

    def test_truncate_shifts_matches(self):
        ds = generate_synthetic(small_spec())
        short = truncate_clips(ds, 2)
        for full, cut in zip(ds.clips, short.clips):
            assert set(cut.matches) <= {0}
            assert cut.matches[0].pairs == full.matches[2].pairs

    def test_invalid_window_rejected(self):
        ds = generate_synthetic(small_spec())
        with pytest.raises(DSGError):
            truncate_clips(ds, 9)
        with pytest.raises(DSGError):
            truncate_clips(ds, 0)
