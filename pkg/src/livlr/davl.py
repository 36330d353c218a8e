"""Question-conditioned integration of the four representation sources.

The four matrices (holistic visual, fine-grained visual, holistic
linguistic, fine-grained linguistic) are each attended against the
question, stacked into one heterogeneous node set, scaled per-source by
learnable index embeddings, and mixed through a GCN over a learned
adjacency, then mean-pooled. Three simpler integration back-ends are kept
as selectable ablation baselines.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, ShapeError
from .graph import learn_adjacency, mean_pool, vanilla_gcn_layer, attn_gcn_layer, AttnGcnParams
from .optim import ParamStore, make_param
from .tensor import (
    Tensor,
    add,
    concat,
    index_rows,
    linear,
    matmul,
    mul,
    row_softmax,
    transpose,
)

SOURCE_NAMES = ("visual_holistic", "visual_fine", "linguistic_holistic", "linguistic_fine")


class RiVariant(str, Enum):
    DAVL = "DAVL"
    RI_GCN = "RI_GCN"
    RI_AT = "RI_AT"
    RI_CONCAT = "RI_CONCAT"


@dataclass
class QattHead:
    w_q: Tensor  # (d, d/N_h), applied to the attended-from rows
    w_k: Tensor  # (d, d/N_h), applied to question tokens
    w_v: Tensor  # (d, d/N_h), applied to question tokens
    w_o: Tensor  # (d/N_h, d/N_h), per-head output map


@dataclass
class QattBlock:
    heads: list[QattHead]


@dataclass
class RepresentationBundle:
    """Stacked order is fixed: visual holistic rows, visual fine rows,
    linguistic holistic rows, linguistic fine rows; the source id of a row
    is therefore a pure function of its position."""

    x_vg: Tensor
    x_vl: Tensor
    x_lg: Tensor
    x_ll: Tensor

    def matrices(self):
        return (self.x_vg, self.x_vl, self.x_lg, self.x_ll)

    def sources(self) -> np.ndarray:
        """Per-row source id in {1..4} for the stacked node matrix."""
        counts = [m.data.shape[0] for m in self.matrices()]
        return np.repeat(np.arange(1, 5), counts)


@dataclass
class DavlParams:
    qatt: dict[str, QattBlock]  # one block per source name
    index_matrix: Tensor | None  # (4, d); None for the variants that skip it
    learn_w1: Tensor | None
    learn_w2: Tensor | None
    w_gcn: Tensor | None  # (d, d) message transform
    attn_gcn: AttnGcnParams | None  # experimental attention alternative
    w_concat: Tensor | None  # (4d, d) for the concatenation baseline
    b_concat: Tensor | None
    n_keep: int
    normalize: bool
    variant: RiVariant

    @property
    def dtype(self):
        first = next(iter(self.qatt.values())).heads[0]
        return first.w_q.data.dtype


def create_davl_params(
    store: ParamStore, rng, d: int, n_heads: int, n_keep: int,
    variant: RiVariant, dtype, normalize: bool = True, attention_gcn: bool = False,
) -> DavlParams:
    if d % n_heads != 0:
        raise ConfigError(f"head count {n_heads} must divide width {d}")
    dh = d // n_heads
    mk = lambda name, shape, **kw: make_param(store, f"davl.{name}", rng, shape, dtype, **kw)
    qatt = {}
    for src in SOURCE_NAMES:
        heads = [
            QattHead(
                w_q=mk(f"qatt.{src}.h{h}.w_q", (d, dh)),
                w_k=mk(f"qatt.{src}.h{h}.w_k", (d, dh)),
                w_v=mk(f"qatt.{src}.h{h}.w_v", (d, dh)),
                w_o=mk(f"qatt.{src}.h{h}.w_o", (dh, dh)),
            )
            for h in range(n_heads)
        ]
        qatt[src] = QattBlock(heads)

    index_matrix = mk("index_embedding", (4, d), init="ones") if variant == RiVariant.DAVL else None
    learn_w1 = learn_w2 = w_gcn = None
    attn_params = None
    w_concat = b_concat = None
    if variant in (RiVariant.DAVL, RiVariant.RI_GCN):
        learn_w1 = mk("learner.w1", (d, d))
        learn_w2 = mk("learner.w2", (d, d))
        if attention_gcn:
            attn_params = AttnGcnParams(
                w=mk("gcn.w", (d, d)),
                w_q=mk("gcn.w_q", (d, d)),
                w_k=mk("gcn.w_k", (d, d)),
            )
        else:
            w_gcn = mk("gcn.w", (d, d))
    elif variant == RiVariant.RI_AT:
        learn_w1 = mk("learner.w1", (d, d))
        learn_w2 = mk("learner.w2", (d, d))
    elif variant == RiVariant.RI_CONCAT:
        w_concat = mk("concat.w", (4 * d, d))
        b_concat = mk("concat.b", (d,), init="zeros")
    return DavlParams(
        qatt=qatt,
        index_matrix=index_matrix,
        learn_w1=learn_w1,
        learn_w2=learn_w2,
        w_gcn=w_gcn,
        attn_gcn=attn_params,
        w_concat=w_concat,
        b_concat=b_concat,
        n_keep=n_keep,
        normalize=normalize,
        variant=variant,
    )


def question_attention(block: QattBlock, x: Tensor, q: Tensor) -> Tensor:
    """Multi-head cross attention: each row of x attends over the question
    rows q; values come from q. Output keeps x's row count and width d."""
    dh = block.heads[0].w_q.data.shape[1]  # = d / N_h, also the score scale
    scale = 1.0 / math.sqrt(dh)
    outs = []
    for head in block.heads:
        scores = matmul(matmul(x, head.w_q), transpose(matmul(q, head.w_k)))
        alpha = row_softmax(mul(scores, scale))
        outs.append(matmul(matmul(alpha, matmul(q, head.w_v)), head.w_o))
    return concat(outs, axis=1)


def apply_index_embedding(index_matrix: Tensor, nodes: Tensor, sources) -> Tensor:
    """Scale each node row elementwise by its source's embedding row.
    sources holds ids in {1..4}."""
    src = np.asarray(sources, dtype=np.intp)
    if src.ndim != 1 or src.size != nodes.data.shape[0]:
        raise ShapeError(
            f"sources shape {src.shape} does not match {nodes.data.shape[0]} rows"
        )
    if src.size and (src.min() < 1 or src.max() > index_matrix.data.shape[0]):
        raise ConfigError(f"source ids must lie in 1..{index_matrix.data.shape[0]}")
    return mul(nodes, index_rows(index_matrix, src - 1))


def integrate(params: DavlParams, bundle: RepresentationBundle, q: Tensor) -> Tensor:
    """Fuse the four representation matrices into one vector (d,)."""
    attended = [
        question_attention(params.qatt[name], x, q)
        for name, x in zip(SOURCE_NAMES, bundle.matrices())
    ]
    variant = params.variant

    if variant == RiVariant.RI_CONCAT:
        pooled = [mean_pool(a) for a in attended]
        flat = concat(pooled, axis=0)  # (4d,)
        return linear(flat, params.w_concat, params.b_concat)

    nodes = concat(attended, axis=0)
    if variant == RiVariant.DAVL:
        nodes = apply_index_embedding(params.index_matrix, nodes, bundle.sources())

    if variant in (RiVariant.DAVL, RiVariant.RI_GCN):
        _, graph = learn_adjacency(params.learn_w1, params.learn_w2, nodes, params.n_keep)
        if params.attn_gcn is not None:
            nodes = attn_gcn_layer(params.attn_gcn, nodes, graph)
        else:
            nodes = vanilla_gcn_layer(params.w_gcn, nodes, graph, normalize=params.normalize)
        return mean_pool(nodes)

    # co-attention baseline: every node attends over all the others
    n = nodes.data.shape[0]
    scores = matmul(matmul(nodes, params.learn_w1), transpose(matmul(nodes, params.learn_w2)))
    off_diag = ~np.eye(n, dtype=bool)
    beta = row_softmax(scores, mask=off_diag)
    return mean_pool(add(nodes, matmul(beta, nodes)))
