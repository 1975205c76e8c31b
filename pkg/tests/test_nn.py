"""Core tensor-engine tests: forward examples, hand-derived gradients
vs finite differences, tape discipline, and the Adam optimizer."""

import numpy as np
import pytest

from dsgtk import nn
from dsgtk.errors import DSGError


def test_dense_hand_example():
    tape = nn.Tape()
    x = tape.const([[1.0, 2.0]])
    w = tape.const([[3.0], [4.0]])
    b = tape.const([[0.0]])
    out = nn.dense_forward(x, w, b)
    assert out.value[0, 0] == pytest.approx(11.0)


def test_dense_identity():
    tape = nn.Tape()
    x = tape.const(np.arange(6.0).reshape(2, 3))
    w = tape.const(np.eye(3))
    b = tape.const(np.zeros((1, 3)))
    out = nn.dense_forward(x, w, b)
    np.testing.assert_array_equal(out.value, x.value)


def test_dense_shape_mismatch():
    tape = nn.Tape()
    with pytest.raises(DSGError):
        nn.dense_forward(tape.const(np.ones((2, 3))), tape.const(np.ones((4, 2))))


def test_selu_fixed_points():
    tape = nn.Tape()
    out = nn.selu(tape.const([[0.0, 1.0]]))
    assert out.value[0, 0] == 0.0
    assert out.value[0, 1] == pytest.approx(nn.SELU_SCALE)


def test_selu_negative_branch():
    tape = nn.Tape()
    out = nn.selu(tape.const([[-1.0]]))
    expected = nn.SELU_SCALE * nn.SELU_ALPHA * (np.exp(-1.0) - 1.0)
    assert out.value[0, 0] == pytest.approx(expected)


def test_softmax_symmetry_and_stability():
    tape = nn.Tape()
    out = nn.softmax_rows(tape.const([[0.0, 0.0], [1000.0, 0.0]]))
    assert out.value[0] == pytest.approx([0.5, 0.5])
    assert out.value[1, 0] == pytest.approx(1.0)
    assert np.isfinite(out.value).all()


@pytest.mark.parametrize("seed", range(5))
def test_softmax_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    tape = nn.Tape()
    out = nn.softmax_rows(tape.const(rng.standard_normal((3, 4)) * 10))
    np.testing.assert_allclose(out.value.sum(axis=1), 1.0, atol=1e-6)


def test_gcn_zero_adjacency_is_identity_message():
    # with no edges each node sees only its self-loop
    tape = nn.Tape()
    x = np.array([[1.0, -2.0], [3.0, 0.5]])
    out = nn.gcn_layer(tape.const(np.zeros((2, 2))), tape.const(x), tape.const(np.eye(2)))
    tape2 = nn.Tape()
    expected = nn.selu(tape2.const(x)).value
    np.testing.assert_allclose(out.value, expected)


def test_gcn_identical_isolated_nodes():
    tape = nn.Tape()
    x = np.array([[1.0, 2.0], [1.0, 2.0]])
    w = np.array([[0.3, -0.2], [0.1, 0.4]])
    out = nn.gcn_layer(tape.const(np.zeros((2, 2))), tape.const(x), tape.const(w))
    np.testing.assert_allclose(out.value[0], out.value[1])


def test_gcn_rejects_bad_adjacency():
    tape = nn.Tape()
    with pytest.raises(DSGError):
        nn.gcn_layer(tape.const(np.ones((2, 3))), tape.const(np.ones((2, 2))), tape.const(np.eye(2)))
    with pytest.raises(DSGError):
        nn.gcn_layer(tape.const(-np.ones((2, 2))), tape.const(np.ones((2, 2))), tape.const(np.eye(2)))


@pytest.mark.parametrize("seed", range(3))
def test_gcn_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    n, d, h = 6, 4, 3
    adj = rng.uniform(0, 1, (n, n))
    adj = (adj + adj.T) / 2
    np.fill_diagonal(adj, 0)
    x = rng.standard_normal((n, d))
    w = rng.standard_normal((d, h))
    perm = rng.permutation(n)
    p_mat = np.eye(n)[perm]

    tape = nn.Tape()
    base = nn.gcn_layer(tape.const(adj), tape.const(x), tape.const(w)).value
    tape2 = nn.Tape()
    permed = nn.gcn_layer(
        tape2.const(p_mat @ adj @ p_mat.T), tape2.const(p_mat @ x), tape2.const(w)
    ).value
    np.testing.assert_allclose(permed, p_mat @ base, atol=1e-5)


def test_cross_entropy_values():
    assert nn.cross_entropy([[1.0, 0.0, 0.0]], 0) == pytest.approx(0.0, abs=1e-12)
    assert nn.cross_entropy([[0.5, 0.5]], 1) == pytest.approx(np.log(2))


def test_cross_entropy_label_out_of_range():
    with pytest.raises(DSGError):
        nn.cross_entropy([[0.5, 0.5]], 2)
    tape = nn.Tape()
    with pytest.raises(DSGError):
        nn.softmax_cross_entropy(tape.const([[0.1, 0.9]]), [5])


def test_tape_backward_twice_is_error():
    tape = nn.Tape()
    x = tape.leaf([[1.0, 2.0]])
    loss = nn.sum_all(nn.selu(x))
    tape.backward(loss)
    with pytest.raises(DSGError):
        tape.backward(loss)


def test_backward_requires_scalar():
    tape = nn.Tape()
    x = tape.leaf([[1.0, 2.0]])
    with pytest.raises(DSGError):
        tape.backward(nn.selu(x))


def test_backward_accumulates_into_parameters():
    p = nn.Parameter("w", [[2.0]])
    tape = nn.Tape()
    v = tape.watch(p)
    # loss = w * w -> dL/dw = 2w = 4
    loss = nn.mul(v, v)
    tape.backward(loss)
    assert p.grad[0, 0] == pytest.approx(4.0)


def test_backward_deterministic_across_runs():
    def grads():
        rng = np.random.default_rng(11)
        p = nn.Parameter("w", rng.standard_normal((3, 2)))
        tape = nn.Tape()
        out = nn.selu(nn.matmul(tape.const(rng.standard_normal((4, 3))), tape.watch(p)))
        tape.backward(nn.sum_all(out))
        return p.grad.copy()

    a, b = grads(), grads()
    assert np.array_equal(a, b)  # bitwise


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        p = nn.Parameter("w", [[1.0, -2.0]])
        opt = nn.Adam([p], lr=0.1)
        opt.step()
        np.testing.assert_array_equal(p.value, [[1.0, -2.0]])

    def test_first_step_magnitude(self):
        p = nn.Parameter("w", [[0.0]])
        p.grad[:] = 1.0
        opt = nn.Adam([p], lr=0.05)
        opt.step()
        assert p.value[0, 0] == pytest.approx(-0.05, rel=1e-6)

    def test_quadratic_bowl(self):
        p = nn.Parameter("x", [[1.0]])
        opt = nn.Adam([p], lr=0.01)
        for _ in range(500):
            opt.zero_grad()
            p.grad[:] = 2.0 * p.value
            opt.step()
        assert abs(p.value[0, 0]) < 1e-3

    def test_lr_zero_is_identity(self):
        rng = np.random.default_rng(0)
        p = nn.Parameter("w", rng.standard_normal((4, 4)))
        before = p.value.copy()
        opt = nn.Adam([p], lr=0.0)
        for _ in range(3):
            opt.zero_grad()
            p.grad[:] = rng.standard_normal((4, 4))
            opt.step()
        assert np.array_equal(p.value, before)


def test_glorot_is_seed_deterministic():
    a = nn.glorot(np.random.default_rng(5), 10, 20)
    b = nn.glorot(np.random.default_rng(5), 10, 20)
    assert np.array_equal(a, b)
    limit = np.sqrt(6.0 / 30.0)
    assert np.abs(a).max() <= limit
