"""Mutual-NN matcher properties and match-file round trips."""

import numpy as np
import pytest

from dsgtk.errors import DSGError
from dsgtk.matching import MatchList, load_matches, mutual_nn_match, save_matches


def brute_force_mutual_nn(a, b, min_conf):
    """Independent oracle: all-pairs cosine similarities, explicit
    mutual-argmax scan."""
    an = a / np.linalg.norm(a, axis=1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True)
    sims = an @ bn.T
    pairs = []
    for i in range(a.shape[0]):
        j = int(np.argmax(sims[i]))
        if int(np.argmax(sims[:, j])) == i and sims[i, j] >= min_conf:
            pairs.append((i, j, float(np.clip(sims[i, j], 0, 1))))
    return pairs


def test_self_match_is_identity():
    rng = np.random.default_rng(0)
    f = rng.standard_normal((6, 8))
    m = mutual_nn_match(f, f, min_conf=0.5)
    assert sorted((i, j) for i, j, _ in m.pairs) == [(i, i) for i in range(6)]
    assert all(c == pytest.approx(1.0) for _, _, c in m.pairs)


def test_orthogonal_sets_empty_below_floor():
    a = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    b = np.array([[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    m = mutual_nn_match(a, b, min_conf=0.5)
    assert len(m) == 0


def assert_same_matching(got, oracle):
    """Index pairs must agree exactly; confidences up to summation order."""
    assert [(i, j) for i, j, _ in got] == [(i, j) for i, j, _ in oracle]
    for (_, _, c1), (_, _, c2) in zip(got, oracle):
        assert c1 == pytest.approx(c2, abs=1e-12)


def test_asymmetric_nearest_neighbors_suppressed():
    # a_0's NN is b_1, but b_1's NN is a_2 -> no (0, 1) pair
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.0, 1.0, 0.0])

    def on_angle(deg):
        rad = np.radians(deg)
        return np.cos(rad) * e1 + np.sin(rad) * e2

    a = np.stack([on_angle(20), on_angle(90), on_angle(5)])
    b = np.stack([on_angle(60), on_angle(10), on_angle(85)])
    # cos distances: a0(20deg) closest to b1(10deg); b1 closest to a2(5deg)
    m = mutual_nn_match(a, b, min_conf=0.0)
    assert (0, 1) not in [(i, j) for i, j, _ in m.pairs]
    assert_same_matching(m.pairs, brute_force_mutual_nn(a, b, 0.0))


@pytest.mark.parametrize("seed", range(10))
def test_matches_brute_force_oracle(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((12, 6))
    b = rng.standard_normal((12, 6))
    assert_same_matching(
        mutual_nn_match(a, b, min_conf=0.3).pairs, brute_force_mutual_nn(a, b, 0.3)
    )


@pytest.mark.parametrize("seed", range(20))
def test_partial_matching_invariant(seed):
    rng = np.random.default_rng(100 + seed)
    a = rng.standard_normal((15, 5))
    b = rng.standard_normal((15, 5))
    m = mutual_nn_match(a, b, min_conf=0.0)
    m.validate()
    assert all(c >= 0.0 for _, _, c in m.pairs)


@pytest.mark.parametrize("seed", range(5))
def test_swap_transposes_matching(seed):
    rng = np.random.default_rng(200 + seed)
    a = rng.standard_normal((10, 4))
    b = rng.standard_normal((10, 4))
    fwd = mutual_nn_match(a, b, min_conf=0.0)
    rev = mutual_nn_match(b, a, min_conf=0.0)
    assert sorted((j, i) for i, j, _ in fwd.pairs) == sorted((i, j) for i, j, _ in rev.pairs)


def test_dimension_mismatch_raises():
    with pytest.raises(DSGError):
        mutual_nn_match(np.ones((3, 4)), np.ones((3, 5)))


def test_empty_match_file_round_trip(tmp_path):
    path = tmp_path / "m.jsonl"
    save_matches(path, {})
    assert load_matches(path) == {}


def test_match_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    a = rng.standard_normal((8, 6))
    b = a + 0.01 * rng.standard_normal((8, 6))
    matches = {0: mutual_nn_match(a, b, min_conf=0.5), 1: MatchList(pairs=[(2, 3, 0.75)])}
    path = tmp_path / "m.jsonl"
    save_matches(path, matches)
    loaded = load_matches(path)
    assert loaded[0].pairs == matches[0].pairs
    assert loaded[1].pairs == matches[1].pairs


def test_duplicate_left_index_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"t": 0, "pairs": [[1, 2, 0.9], [1, 3, 0.8]]}\n')
    with pytest.raises(DSGError, match="duplicate left patch index 1"):
        load_matches(path)


def test_duplicate_right_index_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"t": 0, "pairs": [[1, 2, 0.9], [3, 2, 0.8]]}\n')
    with pytest.raises(DSGError, match="duplicate right patch index 2"):
        load_matches(path)


def test_malformed_record_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"pairs": [[1, 2, 0.9]]}\n')
    with pytest.raises(DSGError, match="malformed"):
        load_matches(path)
