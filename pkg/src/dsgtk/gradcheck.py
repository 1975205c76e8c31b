"""Finite-difference verification of every differentiable operation.

Each check builds a scalar loss from the op under test (composed with a
fixed random linear functional where the op output is a matrix), runs
the tape backward, and compares against central finite differences in
float64. The reported number is the max absolute deviation normalized
by the gradient magnitude.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .clustering import dmon_terms_op, mincut_terms_op
from .graphs import FeatureClip, build_dynamic_graph
from .matching import match_consecutive
from .model import DSGModel, ModelSpec

TOLERANCE = 1e-4

# A wrong analytic gradient deviates at every step size; finite-difference
# artifacts do not. Round-off noise dominates tiny steps when the gradient
# is small relative to the loss, and a probe pair can straddle a SeLU kink
# at large steps, so each tensor is checked at two scales and the better
# agreement is reported.
_FD_STEPS = (1e-5, 1e-4)
_FD_EARLY_EXIT = 1e-5


def _fd_error(value_fn, x, analytic, steps=_FD_STEPS) -> float:
    best = np.inf
    for h in steps:
        numeric = nn.finite_difference(value_fn, x, h=h)
        best = min(best, nn.gradient_error(analytic, numeric))
        if best <= _FD_EARLY_EXIT:
            break
    return float(best)


def _max_rel_err(make_loss, arrays) -> float:
    def value(_ignored=None) -> float:
        tape = nn.Tape()
        leaves = [tape.leaf(a) for a in arrays]
        return make_loss(tape, leaves).value.item()

    tape = nn.Tape()
    leaves = [tape.leaf(a) for a in arrays]
    loss = make_loss(tape, leaves)
    tape.backward(loss)
    worst = 0.0
    for a, leaf in zip(arrays, leaves):
        analytic = tape.leaf_grads.get(leaf.vid, np.zeros_like(a))
        worst = max(worst, _fd_error(value, a, analytic, steps=(1e-6, 1e-5)))
    return worst


def _functional(rng, shape):
    return rng.standard_normal(shape)


def check_dense(rng) -> float:
    x = rng.standard_normal((4, 3))
    w = rng.standard_normal((3, 2))
    b = rng.standard_normal((1, 2))
    r = _functional(rng, (4, 2))

    def loss(tape, leaves):
        out = nn.dense_forward(leaves[0], leaves[1], leaves[2])
        return nn.sum_all(nn.mul_mask(out, r))

    return _max_rel_err(loss, [x, w, b])


def check_selu(rng) -> float:
    x = rng.standard_normal((3, 5))
    r = _functional(rng, (3, 5))
    return _max_rel_err(lambda t, v: nn.sum_all(nn.mul_mask(nn.selu(v[0]), r)), [x])


def check_sigmoid(rng) -> float:
    x = rng.standard_normal((3, 4))
    r = _functional(rng, (3, 4))
    return _max_rel_err(lambda t, v: nn.sum_all(nn.mul_mask(nn.sigmoid(v[0]), r)), [x])


def check_softmax(rng) -> float:
    x = rng.standard_normal((3, 4))
    r = _functional(rng, (3, 4))
    return _max_rel_err(lambda t, v: nn.sum_all(nn.mul_mask(nn.softmax_rows(v[0]), r)), [x])


def check_gcn(rng) -> float:
    # strictly positive entries so finite-difference probes stay in-domain
    n, d, h = 5, 4, 3
    adj = rng.uniform(0.1, 1.0, size=(n, n))
    adj = (adj + adj.T) / 2
    x = rng.standard_normal((n, d))
    w = rng.standard_normal((d, h))
    r = _functional(rng, (n, h))

    def loss(tape, leaves):
        out = nn.gcn_layer(leaves[0], leaves[1], leaves[2])
        return nn.sum_all(nn.mul_mask(out, r))

    return _max_rel_err(loss, [adj, x, w])


def check_cross_entropy(rng) -> float:
    logits = rng.standard_normal((4, 3))
    labels = rng.integers(0, 3, size=4)
    return _max_rel_err(lambda t, v: nn.softmax_cross_entropy(v[0], labels), [logits])


def _random_adjacency(rng, n):
    a = rng.uniform(0.0, 1.0, size=(n, n))
    a = (a + a.T) / 2
    a[a < 0.4] = 0.0
    np.fill_diagonal(a, 0.0)
    if a.sum() == 0:
        a[0, 1] = a[1, 0] = 0.5
    return a


def check_dmon(rng) -> float:
    n, k = 6, 3
    a = _random_adjacency(rng, n)
    logits = rng.standard_normal((n, k))

    def loss(tape, leaves):
        c = nn.softmax_rows(leaves[0])
        mod, col = dmon_terms_op(c, a)
        return nn.add(mod, nn.scale(col, 0.7))

    return _max_rel_err(loss, [logits])


def check_mincut(rng) -> float:
    n, k = 6, 3
    a = _random_adjacency(rng, n)
    logits = rng.standard_normal((n, k))

    def loss(tape, leaves):
        c = nn.softmax_rows(leaves[0])
        cut, ortho = mincut_terms_op(c, a)
        return nn.add(cut, nn.scale(ortho, 0.7))

    return _max_rel_err(loss, [logits])


def check_edge_head(rng) -> float:
    k, d, h = 4, 5, 3
    x_pool = rng.standard_normal((k, d))
    w1 = rng.standard_normal((2 * d, h))
    b1 = rng.standard_normal((1, h))
    w2 = rng.standard_normal((h, 1))
    b2 = rng.standard_normal((1, 1))
    r = _functional(rng, (k, k))

    def loss(tape, leaves):
        xp, w1v, b1v, w2v, b2v = leaves
        hmid = nn.selu(nn.dense_forward(nn.pairwise_concat(xp), w1v, b1v))
        w_full = nn.reshape(nn.sigmoid(nn.dense_forward(hmid, w2v, b2v)), k, k)
        sym = nn.scale(nn.add(w_full, nn.transpose(w_full)), 0.5)
        return nn.sum_all(nn.mul_mask(sym, r))

    return _max_rel_err(loss, [x_pool, w1, b1, w2, b2])


def toy_graph(rng, w=2, n=9, d=12):
    """Small clip -> dynamic graph for end-to-end checks."""
    base = rng.standard_normal((n, d))
    feats = np.stack([base + 0.05 * rng.standard_normal((n, d)) for _ in range(w)])
    clip = FeatureClip(features=feats, frame_ids=list(range(w)), grid=(3, 3), phase_label=1)
    matches = match_consecutive(feats, min_conf=0.5)
    return build_dynamic_graph(clip, tau=0.2, matches=matches, spatial_encoding=True)


def check_joint(rng, objective="dmon") -> float:
    graph = toy_graph(rng)
    spec = ModelSpec(
        feature_dim=12, clusters=3, phases=2,
        gcn_hidden=(8,), mlp_hidden=(), edge_hidden=(8,), cls_hidden=(8,),
        objective=objective,
    )
    model = DSGModel(spec, seed=int(rng.integers(1 << 31)))

    def value() -> float:
        return model.joint_loss(graph, label=1).L_joint

    result = model.forward(graph, label=1)
    result.tape.backward(result.l_joint)
    worst = 0.0
    for p in model.parameters():
        worst = max(worst, _fd_error(lambda _x: value(), p.value, p.grad, steps=(1e-4, 1e-5)))
        p.zero_grad()
    return worst


CHECKS = {
    "dense_forward": check_dense,
    "selu": check_selu,
    "sigmoid": check_sigmoid,
    "softmax_rows": check_softmax,
    "gcn_layer": check_gcn,
    "softmax_cross_entropy": check_cross_entropy,
    "dmon_loss": check_dmon,
    "mincut_loss": check_mincut,
    "edge_weight_head": check_edge_head,
    "joint_loss_dmon": lambda rng: check_joint(rng, "dmon"),
    "joint_loss_mincut": lambda rng: check_joint(rng, "mincut"),
}


def run_all(seeds: int = 5, base_seed: int = 0) -> dict[str, float]:
    """Max relative error per op over `seeds` random draws."""
    results = {}
    for op_index, (name, check) in enumerate(CHECKS.items()):
        worst = 0.0
        for s in range(seeds):
            rng = np.random.default_rng(base_seed + 1000 * s + op_index)
            worst = max(worst, check(rng))
        results[name] = worst
    return results
