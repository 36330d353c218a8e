"""Dense graphs and the graph network layers shared by both encoders.

Graphs are small (tens of nodes), so adjacency is a dense boolean matrix
and edge types a dense integer matrix. Node update layers follow the
residual pattern out_i = ReLU(v_i + aggregate(neighbors)).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, GraphIntegrityError, NumericError, ShapeError
from .tensor import (
    Tensor,
    add,
    constant,
    index_rows,
    matmul,
    mean_axis0,
    mul,
    relu,
    reshape,
    row_softmax,
    sum_axis1,
    take,
    transpose,
)


@dataclass
class DenseGraph:
    """Directed graph over n nodes.

    adjacency[i, j] is True when j is a neighbor of (sends a message to) i.
    edge_types, when present, labels exactly the adjacent pairs with values
    in [1, n_types]; 0 marks the absence of an edge.
    """

    n_nodes: int
    adjacency: np.ndarray
    edge_types: np.ndarray | None = None
    self_loops_excluded: bool = field(default=True)

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.shape != (self.n_nodes, self.n_nodes):
            raise ShapeError(
                f"adjacency shape {adj.shape} does not match n_nodes={self.n_nodes}"
            )
        self.adjacency = adj
        if self.self_loops_excluded and adj.trace() > 0:
            raise GraphIntegrityError("self loop on the adjacency diagonal")
        if self.edge_types is not None:
            et = np.asarray(self.edge_types)
            if et.shape != adj.shape:
                raise ShapeError(
                    f"edge_types shape {et.shape} does not match adjacency {adj.shape}"
                )
            if ((et > 0) != adj).any():
                i, j = np.argwhere((et > 0) != adj)[0]
                raise GraphIntegrityError(
                    f"edge ({i}, {j}) disagrees with its type label"
                )
            self.edge_types = et

    def degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


@dataclass
class AttnGcnParams:
    """One attention-aggregation layer: message transform plus the two
    projections that score node pairs."""

    w: Tensor
    w_q: Tensor
    w_k: Tensor


@dataclass
class TypedGcnParams:
    """Attention layer whose messages carry a learned per-edge-type scalar."""

    w: Tensor
    w_q: Tensor
    w_k: Tensor
    type_bias: Tensor  # (n_types,)


def attention_coefficients(params, nodes: Tensor, graph: DenseGraph) -> Tensor:
    """Row-stochastic neighbor weights.

    Scores are bilinear, score(i, j) = <W_q v_i, W_k v_j>, softmaxed over
    each node's neighborhood. Rows with no neighbors come out all zero.
    """
    q = matmul(nodes, params.w_q)
    k = matmul(nodes, params.w_k)
    scores = matmul(q, transpose(k))
    return row_softmax(scores, mask=graph.adjacency, allow_empty=True)


def attn_gcn_layer(params: AttnGcnParams, nodes: Tensor, graph: DenseGraph) -> Tensor:
    """out_i = ReLU(v_i + sum_j alpha_ij W v_j) over neighbors j."""
    alpha = attention_coefficients(params, nodes, graph)
    msgs = matmul(nodes, params.w)
    return relu(add(nodes, matmul(alpha, msgs)))


def typed_edge_gcn_layer(
    params: TypedGcnParams, nodes: Tensor, graph: DenseGraph
) -> Tensor:
    """Attention aggregation where each message also carries a scalar bias
    chosen by the edge's type label, broadcast over feature dims."""
    if graph.edge_types is None:
        raise GraphIntegrityError("typed edge layer needs edge type labels")
    alpha = attention_coefficients(params, nodes, graph)
    msgs = matmul(nodes, params.w)
    agg = matmul(alpha, msgs)
    # per-edge scalars: 0 off-edge entries are masked by alpha being 0 there
    idx = np.where(graph.adjacency, graph.edge_types - 1, 0).ravel()
    bias_mat = reshape(take(params.type_bias, idx), graph.adjacency.shape)
    shift = sum_axis1(mul(alpha, bias_mat))  # (n, 1), added to every column
    return relu(add(add(nodes, agg), shift))


def vanilla_gcn_layer(
    w: Tensor, nodes: Tensor, graph: DenseGraph, normalize: bool = True
) -> Tensor:
    """Unweighted aggregation: out_i = ReLU(v_i + mean_j W v_j) over
    neighbors, or a plain sum when normalize is off."""
    msgs = matmul(nodes, w)
    a = graph.adjacency.astype(nodes.data.dtype)
    if normalize:
        deg = a.sum(axis=1, keepdims=True)
        a = a / np.where(deg == 0.0, 1.0, deg)
    return relu(add(nodes, matmul(constant(a, nodes.data.dtype), msgs)))


def learn_adjacency(
    w1: Tensor, w2: Tensor, nodes: Tensor, n_keep: int
) -> tuple[Tensor, DenseGraph]:
    """Score every ordered node pair bilinearly and keep each row's top
    n_keep off-diagonal entries as edges.

    Ties keep the lower column index. Rows keep min(n_keep, n-1) edges, so
    a single-node graph comes out edgeless. The raw score matrix is
    returned alongside the graph.
    """
    if n_keep < 1:
        raise ContractError(f"n_keep must be >= 1, got {n_keep}")
    p = matmul(nodes, w1)
    k = matmul(nodes, w2)
    scores = matmul(p, transpose(k))
    if not np.isfinite(scores.data).all():
        # nan never orders correctly under argsort, so selection would pick
        # forbidden columns; fail as a numeric problem, not a graph bug
        raise NumericError("non-finite edge affinity scores")

    n = scores.data.shape[0]
    keep = min(n_keep, n - 1)
    adj = np.zeros((n, n), dtype=bool)
    if keep > 0:
        vals = scores.data.copy()
        np.fill_diagonal(vals, -np.inf)
        for i in range(n):
            # stable sort on the negated row: descending value, then
            # ascending column index among ties
            order = np.argsort(-vals[i], kind="stable")
            adj[i, order[:keep]] = True
    return scores, DenseGraph(n, adj)


def mean_pool(nodes: Tensor, subset=None) -> Tensor:
    """Mean of the selected node rows; subset=None pools every node."""
    if subset is None:
        return mean_axis0(nodes)
    idx = np.asarray(subset, dtype=np.intp)
    if idx.size == 0:
        raise ContractError("mean_pool over an empty subset")
    return mean_axis0(index_rows(nodes, idx))
