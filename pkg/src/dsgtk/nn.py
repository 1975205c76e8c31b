"""Minimal dense-tensor engine with reverse-mode gradients.

All values are 2-D numpy arrays (row-major). Every differentiable
operation computes its forward result eagerly and records a backward
closure on a :class:`Tape`; gradients are hand-derived per op rather
than composed from generic primitives. `Tape.backward` walks the record
in exact reverse execution order and accumulates gradients into the
participating :class:`Parameter` objects.

Scalars are represented as 1x1 arrays so that a single value container
suffices. Float64 is the default dtype; gradient checks always run in
float64.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import DSGError

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805


def as_matrix(x, dtype=np.float64):
    """Coerce to a 2-D float array; scalars become 1x1, vectors 1xN."""
    a = np.asarray(x, dtype=dtype)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise DSGError(f"expected at most 2 dimensions, got shape {a.shape}")
    return a


class Parameter:
    """A named trainable matrix with a persistent gradient buffer."""

    def __init__(self, name: str, value):
        self.name = name
        self.value = as_matrix(value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[:] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


class Var:
    """A tape-tracked value. Do not mutate `.value` after creation."""

    __slots__ = ("value", "tape", "vid", "requires_grad")

    def __init__(self, value, tape, vid, requires_grad):
        self.value = value
        self.tape = tape
        self.vid = vid
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Ordered record of executed ops with saved inputs for backward.

    One forward pass per tape; calling backward twice is an error.
    """

    def __init__(self):
        self._ops: list[tuple[int, tuple[Var, ...], Callable]] = []
        self._params: dict[int, Parameter] = {}
        self._next_id = 0
        self._spent = False
        self.leaf_grads: dict[int, np.ndarray] = {}

    def _make(self, value, requires_grad) -> Var:
        vid = self._next_id
        self._next_id += 1
        return Var(value, self, vid, requires_grad)

    def const(self, value) -> Var:
        """A value gradients do not flow into."""
        return self._make(as_matrix(value), False)

    def leaf(self, value) -> Var:
        """A differentiable input; its gradient lands in `leaf_grads`."""
        return self._make(as_matrix(value), True)

    def watch(self, param: Parameter) -> Var:
        v = self._make(param.value, True)
        self._params[v.vid] = param
        return v

    def record(self, out_value, inputs: Sequence[Var], backward: Callable) -> Var:
        """Append an op. `backward(g_out)` must return one gradient (or
        None) per input, in order."""
        out = self._make(out_value, any(i.requires_grad for i in inputs))
        if out.requires_grad:
            self._ops.append((out.vid, tuple(inputs), backward))
        return out

    def backward(self, loss: Var):
        if self._spent:
            raise DSGError("tape backward called twice without a new forward")
        if loss.value.size != 1:
            raise DSGError(f"backward requires a scalar loss, got shape {loss.shape}")
        self._spent = True
        grads: dict[int, np.ndarray] = {loss.vid: np.ones_like(loss.value)}
        for out_vid, inputs, back in reversed(self._ops):
            g_out = grads.pop(out_vid, None)
            if g_out is None:
                continue
            g_ins = back(g_out)
            for var, g in zip(inputs, g_ins):
                if g is None or not var.requires_grad:
                    continue
                if var.vid in grads:
                    grads[var.vid] = grads[var.vid] + g
                else:
                    grads[var.vid] = g
        for vid, param in self._params.items():
            if vid in grads:
                param.grad += grads.pop(vid)
        self.leaf_grads = grads


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise DSGError(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a: Var, b: Var) -> Var:
    if a.value.shape[1] != b.value.shape[0]:
        raise DSGError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.value @ b.value

    def back(g):
        return g @ b.value.T, a.value.T @ g

    return a.tape.record(out, (a, b), back)


def transpose(a: Var) -> Var:
    return a.tape.record(a.value.T.copy(), (a,), lambda g: (g.T,))


def add(a: Var, b: Var) -> Var:
    if a.value.shape != b.value.shape:
        raise DSGError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a.tape.record(a.value + b.value, (a, b), lambda g: (g, g))


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return a.tape.record(a.value * c, (a,), lambda g: (g * c,))


def mul(a: Var, b: Var) -> Var:
    if a.value.shape != b.value.shape:
        raise DSGError(f"mul shape mismatch: {a.shape} vs {b.shape}")

    def back(g):
        return g * b.value, g * a.value

    return a.tape.record(a.value * b.value, (a, b), back)


def mul_mask(a: Var, mask: np.ndarray) -> Var:
    """Elementwise product with a constant mask."""
    return a.tape.record(a.value * mask, (a,), lambda g: (g * mask,))


def add_identity(a: Var) -> Var:
    n = a.value.shape[0]
    if a.value.shape[1] != n:
        raise DSGError(f"add_identity needs a square matrix, got {a.shape}")
    return a.tape.record(a.value + np.eye(n), (a,), lambda g: (g,))


def row_sum(a: Var) -> Var:
    """Sum across columns -> (rows, 1)."""
    cols = a.value.shape[1]
    out = a.value.sum(axis=1, keepdims=True)
    return a.tape.record(out, (a,), lambda g: (np.repeat(g, cols, axis=1),))


def col_sum(a: Var) -> Var:
    """Sum across rows -> (1, cols)."""
    rows = a.value.shape[0]
    out = a.value.sum(axis=0, keepdims=True)
    return a.tape.record(out, (a,), lambda g: (np.repeat(g, rows, axis=0),))


def sum_all(a: Var) -> Var:
    out = as_matrix(a.value.sum())
    return a.tape.record(out, (a,), lambda g: (np.full_like(a.value, g[0, 0]),))


def power(a: Var, p: float) -> Var:
    out = np.power(a.value, p)

    def back(g):
        return (g * p * np.power(a.value, p - 1.0),)

    return a.tape.record(out, (a,), back)


def scale_rows(m: Var, v: Var) -> Var:
    """m * v with v an (n, 1) column broadcast across columns."""
    out = m.value * v.value

    def back(g):
        return g * v.value, (g * m.value).sum(axis=1, keepdims=True)

    return m.tape.record(out, (m, v), back)


def scale_cols(m: Var, v: Var) -> Var:
    """m * v with v a (1, n) row broadcast across rows."""
    out = m.value * v.value

    def back(g):
        return g * v.value, (g * m.value).sum(axis=0, keepdims=True)

    return m.tape.record(out, (m, v), back)


def concat_cols(a: Var, b: Var) -> Var:
    if a.value.shape[0] != b.value.shape[0]:
        raise DSGError(f"concat_cols row mismatch: {a.shape} vs {b.shape}")
    ca = a.value.shape[1]
    out = np.concatenate([a.value, b.value], axis=1)
    return a.tape.record(out, (a, b), lambda g: (g[:, :ca], g[:, ca:]))


# ---------------------------------------------------------------------------
# layer ops


def dense_forward(x: Var, W: Var, b: Var | None = None) -> Var:
    """x @ W + b, with b a (1, cols) row broadcast over rows."""
    if x.value.shape[1] != W.value.shape[0]:
        raise DSGError(
            f"dense shape mismatch: input cols {x.value.shape[1]} vs weight rows {W.value.shape[0]}"
        )
    out = x.value @ W.value
    if b is not None:
        out = out + b.value

    def back(g):
        gx = g @ W.value.T
        gW = x.value.T @ g
        if b is None:
            return gx, gW
        return gx, gW, g.sum(axis=0, keepdims=True)

    inputs = (x, W) if b is None else (x, W, b)
    return x.tape.record(out, inputs, back)


def selu(x: Var) -> Var:
    _check_finite(x.value, "selu input")
    pos = x.value > 0
    ex = np.exp(np.minimum(x.value, 0.0))
    out = SELU_SCALE * np.where(pos, x.value, SELU_ALPHA * (ex - 1.0))
    deriv = SELU_SCALE * np.where(pos, 1.0, SELU_ALPHA * ex)
    return x.tape.record(out, (x,), lambda g: (g * deriv,))


def sigmoid(x: Var) -> Var:
    out = 1.0 / (1.0 + np.exp(-x.value))
    return x.tape.record(out, (x,), lambda g: (g * out * (1.0 - out),))


def softmax_rows(x: Var) -> Var:
    """Row-wise softmax, stabilized by row-max subtraction."""
    _check_finite(x.value, "softmax input")
    z = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return ((g - dot) * out,)

    return x.tape.record(out, (x,), back)


def normalize_adjacency(adj: Var) -> Var:
    """Symmetric renormalization with self-loops.

    Returns D^{-1/2} (A + I) D^{-1/2} where D is the degree matrix of
    A + I. Differentiable in A.
    """
    a = adj.value
    if a.shape[0] != a.shape[1]:
        raise DSGError(f"adjacency must be square, got {a.shape}")
    if np.any(a < 0):
        raise DSGError("adjacency entries must be nonnegative")
    a_loop = add_identity(adj)
    deg = row_sum(a_loop)
    inv_sqrt = power(deg, -0.5)
    return scale_cols(scale_rows(a_loop, inv_sqrt), transpose(inv_sqrt))


def gcn_layer(adj: Var, x: Var, W: Var, activation: str = "selu") -> Var:
    """One graph convolution: act(normalize_adjacency(adj) @ x @ W)."""
    if adj.value.shape[0] != x.value.shape[0]:
        raise DSGError(
            f"adjacency rows {adj.value.shape[0]} != feature rows {x.value.shape[0]}"
        )
    h = matmul(matmul(normalize_adjacency(adj), x), W)
    if activation == "selu":
        return selu(h)
    if activation == "linear":
        return h
    raise DSGError(f"unknown activation {activation!r}")


def cross_entropy(probs, label) -> float:
    """-log p[label], averaged over batch rows, from probabilities.

    A plain numeric helper (no tape); training paths use the fused
    `softmax_cross_entropy` on logits for stable gradients.
    """
    p = as_matrix(probs)
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if labels.shape[0] != p.shape[0]:
        raise DSGError(f"{p.shape[0]} prob rows but {labels.shape[0]} labels")
    if labels.min() < 0 or labels.max() >= p.shape[1]:
        raise DSGError(f"label out of range for {p.shape[1]} classes")
    picked = p[np.arange(p.shape[0]), labels]
    return float(-np.log(np.maximum(picked, 1e-300)).mean())


def softmax_cross_entropy(logits: Var, labels) -> Var:
    """Mean cross-entropy over rows with softmax fused into the op."""
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    rows, cols = logits.value.shape
    if labels.shape[0] != rows:
        raise DSGError(f"{rows} logit rows but {labels.shape[0]} labels")
    if labels.min() < 0 or labels.max() >= cols:
        raise DSGError(f"label out of range for {cols} classes")
    z = logits.value - logits.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    picked = p[np.arange(rows), labels]
    loss = as_matrix(-np.log(np.maximum(picked, 1e-300)).mean())

    def back(g):
        onehot = np.zeros_like(p)
        onehot[np.arange(rows), labels] = 1.0
        return (g[0, 0] * (p - onehot) / rows,)

    return logits.tape.record(loss, (logits,), back)


def pairwise_concat(x: Var) -> Var:
    """All ordered row pairs of x, concatenated: row i*K+j is [x_i | x_j]."""
    k, d = x.value.shape
    left = np.repeat(x.value, k, axis=0)
    right = np.tile(x.value, (k, 1))
    out = np.concatenate([left, right], axis=1)

    def back(g):
        g_left = g[:, :d].reshape(k, k, d).sum(axis=1)
        g_right = g[:, d:].reshape(k, k, d).sum(axis=0)
        return (g_left + g_right,)

    return x.tape.record(out, (x,), back)


def reshape(x: Var, rows: int, cols: int) -> Var:
    shape = x.value.shape
    out = x.value.reshape(rows, cols)
    return x.tape.record(out, (x,), lambda g: (g.reshape(shape),))


def zero_diagonal(x: Var) -> Var:
    mask = 1.0 - np.eye(x.value.shape[0])
    return mul_mask(x, mask)


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with bias correction; moment state persists per parameter."""

    def __init__(self, params: Sequence[Parameter], lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.value) for p in self.params}
        self.v = {p.name: np.zeros_like(p.value) for p in self.params}

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            g = p.grad
            m = self.m[p.name]
            v = self.v[p.name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**self.t)
            v_hat = v / (1.0 - b2**self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# finite differences


def finite_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return g


def gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute deviation normalized by the gradient magnitude."""
    scale_ = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale_)
