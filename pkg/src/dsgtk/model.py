"""Downstream heads over the pooled scene graph and the joint objective.

The edge-weight head scores every ordered cluster pair from concatenated
pooled features through an MLP + sigmoid and symmetrizes the result; the
phase classifier runs a GCN stack over the pooled adjacency gated by
those weights, sum-pools over cluster nodes, and predicts phase
probabilities. The joint loss couples the unsupervised clustering
objective with classification cross-entropy, end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .clustering import (
    ClusterAssignment,
    ClusteringHead,
    ClusteringLoss,
    PooledSceneGraph,
    dmon_terms_op,
    mincut_terms_op,
)
from .errors import DSGError
from .graphs import DynamicGraph


@dataclass
class ModelSpec:
    """Architecture and loss configuration for one model instance."""

    feature_dim: int
    clusters: int
    phases: int
    gcn_hidden: tuple[int, ...] = (64,)
    mlp_hidden: tuple[int, ...] = ()
    edge_hidden: tuple[int, ...] = (64,)
    cls_hidden: tuple[int, ...] = (64,)
    objective: str = "dmon"
    collapse_weight: float = 1.0
    loss_weight_clustering: float = 1.0
    loss_weight_classification: float = 1.0
    spatial_edge_weight: float = 1.0
    temporal_edge_weight: float = 1.0

    def __post_init__(self):
        if self.objective not in ("dmon", "mincut"):
            raise DSGError(f"unknown clustering objective {self.objective!r}")


@dataclass
class PhasePrediction:
    probs: np.ndarray  # (1, P)
    predicted: int
    logits: np.ndarray  # (1, P)


@dataclass
class JointLossReport:
    L_u: float
    L_CE: float
    L_joint: float
    loss_weights: tuple[float, float] = (1.0, 1.0)
    clustering: ClusteringLoss | None = None


@dataclass
class ForwardResult:
    """Tape variables of one end-to-end forward pass."""

    tape: nn.Tape
    C: nn.Var
    x_pool: nn.Var
    a_pool: nn.Var
    w_pool: nn.Var
    logits: nn.Var | None
    l_u: nn.Var
    structure: nn.Var
    balance: nn.Var
    l_ce: nn.Var | None
    l_joint: nn.Var | None

    def report(self, spec: ModelSpec) -> JointLossReport:
        clustering = ClusteringLoss(
            objective=spec.objective,
            structure_term=self.structure.value.item(),
            balance_term=self.balance.value.item(),
            balance_weight=spec.collapse_weight,
            total=self.l_u.value.item(),
        )
        return JointLossReport(
            L_u=self.l_u.value.item(),
            L_CE=self.l_ce.value.item() if self.l_ce is not None else float("nan"),
            L_joint=self.l_joint.value.item() if self.l_joint is not None else float("nan"),
            loss_weights=(spec.loss_weight_clustering, spec.loss_weight_classification),
            clustering=clustering,
        )


class DSGModel:
    """Clustering head + edge-weight head + phase classifier."""

    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.clustering = ClusteringHead(
            spec.feature_dim, spec.clusters, spec.gcn_hidden, spec.mlp_hidden, rng
        )
        d = spec.feature_dim
        self.edge_layers: list[tuple[nn.Parameter, nn.Parameter]] = []
        width = 2 * d
        for i, h in enumerate(list(spec.edge_hidden) + [1]):
            w = nn.Parameter(f"edge.mlp{i}.W", nn.glorot(rng, width, h))
            b = nn.Parameter(f"edge.mlp{i}.b", np.zeros((1, h)))
            self.edge_layers.append((w, b))
            width = h
        self.cls_gcn: list[nn.Parameter] = []
        width = d
        for i, h in enumerate(spec.cls_hidden):
            self.cls_gcn.append(nn.Parameter(f"cls.gcn{i}.W", nn.glorot(rng, width, h)))
            width = h
        self.cls_out_w = nn.Parameter("cls.out.W", nn.glorot(rng, width, spec.phases))
        self.cls_out_b = nn.Parameter("cls.out.b", np.zeros((1, spec.phases)))

    def parameters(self) -> list[nn.Parameter]:
        out = self.clustering.parameters()
        for w, b in self.edge_layers:
            out.extend((w, b))
        out.extend(self.cls_gcn)
        out.extend((self.cls_out_w, self.cls_out_b))
        return out

    def parameters_by_head(self) -> dict[str, list[nn.Parameter]]:
        groups = {"cluster": [], "edge": [], "cls": []}
        for p in self.parameters():
            groups[p.name.split(".")[0]].append(p)
        return groups

    # -- tape-level pieces --------------------------------------------------

    def edge_weights_op(self, tape: nn.Tape, x_pool: nn.Var) -> nn.Var:
        """Symmetric (K, K) relation strengths in (0, 1)."""
        k = x_pool.value.shape[0]
        h = nn.pairwise_concat(x_pool)
        for i, (w, b) in enumerate(self.edge_layers):
            h = nn.dense_forward(h, tape.watch(w), tape.watch(b))
            if i < len(self.edge_layers) - 1:
                h = nn.selu(h)
        w_full = nn.reshape(nn.sigmoid(h), k, k)
        return nn.scale(nn.add(w_full, nn.transpose(w_full)), 0.5)

    def classifier_op(self, tape: nn.Tape, a_eff: nn.Var, x_pool: nn.Var) -> nn.Var:
        h = x_pool
        for w in self.cls_gcn:
            h = nn.gcn_layer(a_eff, h, tape.watch(w), activation="selu")
        pooled = nn.col_sum(h)
        return nn.dense_forward(pooled, tape.watch(self.cls_out_w), tape.watch(self.cls_out_b))

    def forward(self, graph: DynamicGraph, label: int | None = None) -> ForwardResult:
        """Full differentiable pass: graph -> clusters -> pooling ->
        edge weights -> classification. Label may be omitted for
        unsupervised-only evaluation (no CE / joint terms then)."""
        spec = self.spec
        tape = nn.Tape()
        adjacency = graph.combined_adjacency(spec.spatial_edge_weight, spec.temporal_edge_weight)
        adj = tape.const(adjacency)
        x = tape.const(graph.node_features)
        if spec.clusters > graph.num_nodes:
            raise DSGError(f"K={spec.clusters} exceeds node count {graph.num_nodes}")

        C = self.clustering.forward(tape, adj, x)
        terms_op = dmon_terms_op if spec.objective == "dmon" else mincut_terms_op
        structure, balance = terms_op(C, adjacency)
        l_u = nn.add(structure, nn.scale(balance, spec.collapse_weight))

        ct = nn.transpose(C)
        x_pool = nn.matmul(ct, x)
        a_pool = nn.zero_diagonal(nn.matmul(nn.matmul(ct, adj), C))
        w_pool = self.edge_weights_op(tape, x_pool)
        a_eff = nn.mul(a_pool, w_pool)
        logits = self.classifier_op(tape, a_eff, x_pool)

        l_ce = l_joint = None
        if label is not None:
            if not 0 <= label < spec.phases:
                raise DSGError(f"label {label} out of range for {spec.phases} phases")
            l_ce = nn.softmax_cross_entropy(logits, [label])
            l_joint = nn.add(
                nn.scale(l_u, spec.loss_weight_clustering),
                nn.scale(l_ce, spec.loss_weight_classification),
            )
        return ForwardResult(
            tape=tape, C=C, x_pool=x_pool, a_pool=a_pool, w_pool=w_pool,
            logits=logits, l_u=l_u, structure=structure, balance=balance,
            l_ce=l_ce, l_joint=l_joint,
        )

    # -- value-level API ----------------------------------------------------

    def predict_edge_weights(self, sg: PooledSceneGraph) -> np.ndarray:
        """Score all cluster pairs and write the result into sg.W_pool."""
        tape = nn.Tape()
        w = self.edge_weights_op(tape, tape.const(sg.X_pool))
        sg.W_pool = w.value
        return w.value

    def classify_phase(self, sg: PooledSceneGraph) -> PhasePrediction:
        """Classify from a pooled scene graph with W_pool populated."""
        tape = nn.Tape()
        a_eff = tape.const(sg.A_pool * sg.W_pool)
        logits = self.classifier_op(tape, a_eff, tape.const(sg.X_pool))
        tape2 = nn.Tape()
        probs = nn.softmax_rows(tape2.leaf(logits.value)).value
        return PhasePrediction(probs=probs, predicted=int(np.argmax(probs[0])), logits=logits.value)

    def joint_loss(self, graph: DynamicGraph, label: int | None,
                   backward: bool = False) -> JointLossReport:
        if label is None:
            raise DSGError("joint loss requires a phase label")
        result = self.forward(graph, label)
        if backward:
            result.tape.backward(result.l_joint)
        return result.report(self.spec)

    def predict(self, graph: DynamicGraph) -> PhasePrediction:
        """End-to-end inference: cluster, pool, weight edges, classify."""
        result = self.forward(graph, label=None)
        tape = nn.Tape()
        probs = nn.softmax_rows(tape.leaf(result.logits.value)).value
        return PhasePrediction(
            probs=probs, predicted=int(np.argmax(probs[0])), logits=result.logits.value
        )

    def scene_graph(self, graph: DynamicGraph) -> tuple[PooledSceneGraph, ClusterAssignment]:
        """Inference-time pooled scene graph with learned edge weights."""
        result = self.forward(graph, label=None)
        assignment = ClusterAssignment(C=result.C.value, K=self.spec.clusters)
        sg = PooledSceneGraph(
            X_pool=result.x_pool.value,
            A_pool=result.a_pool.value,
            W_pool=result.w_pool.value,
            frame_span=(0, graph.w),
        )
        return sg, assignment
