"""Clip encoder: holistic frame vectors plus per-frame object graphs.

Each frame contributes one holistic row (projected appearance feature)
and one fine-grained row. The fine-grained row pools two object graphs:
a spatial graph whose edges carry an 11-way geometric relation label,
and a semantic graph whose adjacency is learned from object class
embeddings. Boxes are (x, y, w, h) in pixels with the origin at the
top-left corner.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError
from .graph import (
    AttnGcnParams,
    DenseGraph,
    TypedGcnParams,
    attn_gcn_layer,
    learn_adjacency,
    mean_pool,
    typed_edge_gcn_layer,
)
from .optim import ParamStore, make_param
from .tensor import Tensor, add, concat, constant, linear, matmul, reshape

N_SPATIAL_TYPES = 11

# reversing a directed pair maps each label to its counterpart
SPATIAL_REVERSAL = {1: 2, 2: 1, 3: 3, 4: 8, 5: 9, 6: 10, 7: 11, 8: 4, 9: 5, 10: 6, 11: 7}


@dataclass
class FrameFeatures:
    """One frame: appearance (d_a,), per-object features (n, d_o),
    per-object class/attribute embeddings (n, d_c), boxes (n, 4)."""

    appearance: np.ndarray
    objects: np.ndarray
    class_attr: np.ndarray
    boxes: np.ndarray
    frame_size: tuple[float, float]

    def __post_init__(self):
        self.appearance = np.asarray(self.appearance, dtype=np.float64)
        self.objects = np.asarray(self.objects, dtype=np.float64)
        self.class_attr = np.asarray(self.class_attr, dtype=np.float64)
        self.boxes = np.asarray(self.boxes, dtype=np.float64)
        if self.appearance.ndim != 1:
            raise DataError(f"appearance must be a vector, got {self.appearance.shape}")
        n = self.objects.shape[0] if self.objects.ndim == 2 else -1
        if n < 1:
            raise DataError(f"objects must be (n, d_o) with n >= 1, got {self.objects.shape}")
        if self.class_attr.shape[0] != n or self.class_attr.ndim != 2:
            raise DataError(
                f"class_attr shape {self.class_attr.shape} does not match {n} objects"
            )
        if self.boxes.shape != (n, 4):
            raise DataError(f"boxes shape {self.boxes.shape} must be ({n}, 4)")
        fw, fh = self.frame_size
        if fw <= 0 or fh <= 0:
            raise DataError(f"bad frame size {self.frame_size}")
        x, y, w, h = self.boxes.T
        if (w <= 0).any() or (h <= 0).any():
            raise DataError("boxes must have positive width and height")
        if (x < 0).any() or (y < 0).any() or (x + w > fw).any() or (y + h > fh).any():
            raise DataError("boxes must lie within the frame bounds")
        self._geometry = None

    def spatial_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached (adjacency, types) for the frame's boxes; geometry is a
        pure function of the data, so one classification serves every
        forward pass."""
        if self._geometry is None:
            self._geometry = (
                classify_spatial_edges(self.boxes, self.frame_size),
                position_features(self.boxes, self.frame_size),
            )
        return self._geometry[0]

    def position_rows(self) -> np.ndarray:
        if self._geometry is None:
            self.spatial_edges()
        return self._geometry[1]


@dataclass
class ClipFeatures:
    frames: list[FrameFeatures]

    def __post_init__(self):
        if not self.frames:
            raise DataError("a clip needs at least one frame")


def spatial_relation(box_i, box_j, frame_size) -> int:
    """Relation label for the ordered pair (i, j), or 0 for no edge.

    Precedence: i inside j (1), i covers j (2), IoU >= 0.5 (3), then one
    of eight 45-degree sectors of the center-to-center direction (4..11,
    label 4 pointing along +x). Pairs whose center distance exceeds the
    diagonal of the union box get no edge.
    """
    xi, yi, wi, hi = (float(v) for v in box_i)
    xj, yj, wj, hj = (float(v) for v in box_j)
    if wi <= 0 or hi <= 0 or wj <= 0 or hj <= 0:
        raise ContractError(f"zero-area box in pair {box_i} / {box_j}")
    xi2, yi2 = xi + wi, yi + hi
    xj2, yj2 = xj + wj, yj + hj

    identical = (xi, yi, xi2, yi2) == (xj, yj, xj2, yj2)
    if not identical:
        if xi >= xj and yi >= yj and xi2 <= xj2 and yi2 <= yj2:
            return 1
        if xj >= xi and yj >= yi and xj2 <= xi2 and yj2 <= yi2:
            return 2

    inter_w = max(0.0, min(xi2, xj2) - max(xi, xj))
    inter_h = max(0.0, min(yi2, yj2) - max(yi, yj))
    inter = inter_w * inter_h
    union_area = wi * hi + wj * hj - inter
    if inter / union_area >= 0.5:
        return 3

    cxi, cyi = xi + wi / 2.0, yi + hi / 2.0
    cxj, cyj = xj + wj / 2.0, yj + hj / 2.0
    ux1, uy1 = min(xi, xj), min(yi, yj)
    ux2, uy2 = max(xi2, xj2), max(yi2, yj2)
    diag = math.hypot(ux2 - ux1, uy2 - uy1)
    if math.hypot(cxj - cxi, cyj - cyi) > diag:
        return 0

    theta = math.atan2(cyj - cyi, cxj - cxi)
    sector = int(((theta + math.pi / 8.0) % (2.0 * math.pi)) / (math.pi / 4.0))
    return 4 + sector


def classify_spatial_edges(boxes, frame_size) -> tuple[np.ndarray, np.ndarray]:
    """Adjacency and type matrices over every ordered object pair."""
    boxes = np.asarray(boxes, dtype=np.float64)
    n = boxes.shape[0]
    adj = np.zeros((n, n), dtype=bool)
    types = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            t = spatial_relation(boxes[i], boxes[j], frame_size)
            if t:
                adj[i, j] = True
                types[i, j] = t
    return adj, types


def position_features(boxes, frame_size) -> np.ndarray:
    """Per-box geometry row [x1/W, y1/H, x2/W, y2/H, w/W, h/H]."""
    boxes = np.asarray(boxes, dtype=np.float64)
    fw, fh = frame_size
    x, y, w, h = boxes.T
    return np.stack([x / fw, y / fh, (x + w) / fw, (y + h) / fh, w / fw, h / fh], axis=1)


@dataclass
class VisualEncoderParams:
    w_hol: Tensor
    b_hol: Tensor
    w_obj: Tensor
    b_obj: Tensor
    w_pos: Tensor
    b_pos: Tensor
    w_spatial_mix: Tensor
    w_cls: Tensor
    b_cls: Tensor
    w_semantic_mix: Tensor
    spatial_layers: list[TypedGcnParams]
    semantic_layers: list[AttnGcnParams]
    learn_w1: Tensor
    learn_w2: Tensor
    n_keep: int

    @property
    def dtype(self):
        return self.w_hol.data.dtype


def create_visual_params(
    store: ParamStore, rng, d: int, d_a: int, d_o: int, d_c: int,
    n_keep: int, n_layers: int, dtype,
) -> VisualEncoderParams:
    mk = lambda name, shape, **kw: make_param(store, f"visual.{name}", rng, shape, dtype, **kw)
    spatial_layers = [
        TypedGcnParams(
            w=mk(f"spatial_gcn.l{i}.w", (d, d)),
            w_q=mk(f"spatial_gcn.l{i}.w_q", (d, d)),
            w_k=mk(f"spatial_gcn.l{i}.w_k", (d, d)),
            type_bias=mk(f"spatial_gcn.l{i}.type_bias", (N_SPATIAL_TYPES,), init="zeros"),
        )
        for i in range(n_layers)
    ]
    semantic_layers = [
        AttnGcnParams(
            w=mk(f"semantic_gcn.l{i}.w", (d, d)),
            w_q=mk(f"semantic_gcn.l{i}.w_q", (d, d)),
            w_k=mk(f"semantic_gcn.l{i}.w_k", (d, d)),
        )
        for i in range(n_layers)
    ]
    return VisualEncoderParams(
        w_hol=mk("holistic.w", (d_a, d)),
        b_hol=mk("holistic.b", (d,), init="zeros"),
        w_obj=mk("obj_proj.w", (d_o, d)),
        b_obj=mk("obj_proj.b", (d,), init="zeros"),
        w_pos=mk("pos_proj.w", (6, d)),
        b_pos=mk("pos_proj.b", (d,), init="zeros"),
        w_spatial_mix=mk("spatial_mix.w", (2 * d, d)),
        w_cls=mk("cls_proj.w", (d_c, d)),
        b_cls=mk("cls_proj.b", (d,), init="zeros"),
        w_semantic_mix=mk("semantic_mix.w", (2 * d, d)),
        spatial_layers=spatial_layers,
        semantic_layers=semantic_layers,
        learn_w1=mk("learner.w1", (d, d)),
        learn_w2=mk("learner.w2", (d, d)),
        n_keep=n_keep,
    )


def encode_holistic(params: VisualEncoderParams, clip: ClipFeatures) -> Tensor:
    """(N_f, d): one projected appearance row per frame."""
    app = constant(np.stack([f.appearance for f in clip.frames]), params.dtype)
    return linear(app, params.w_hol, params.b_hol)


def encode_frame(params: VisualEncoderParams, frame: FrameFeatures) -> Tensor:
    """One fine-grained frame vector (d,): pooled spatial graph plus
    pooled semantic graph over the frame's objects."""
    dtype = params.dtype
    obj = linear(constant(frame.objects, dtype), params.w_obj, params.b_obj)

    # spatial branch: geometry-typed edges over box relations
    pos = linear(constant(frame.position_rows(), dtype), params.w_pos, params.b_pos)
    v_sp = matmul(concat([obj, pos], axis=1), params.w_spatial_mix)
    adj, types = frame.spatial_edges()
    g_sp = DenseGraph(len(frame.boxes), adj, types)
    for layer in params.spatial_layers:
        v_sp = typed_edge_gcn_layer(layer, v_sp, g_sp)

    # semantic branch: adjacency learned from class/attribute content
    cls = linear(constant(frame.class_attr, dtype), params.w_cls, params.b_cls)
    v_se = matmul(concat([obj, cls], axis=1), params.w_semantic_mix)
    _, g_se = learn_adjacency(params.learn_w1, params.learn_w2, v_se, params.n_keep)
    for layer in params.semantic_layers:
        v_se = attn_gcn_layer(layer, v_se, g_se)

    return add(mean_pool(v_sp), mean_pool(v_se))


def encode_clip(params: VisualEncoderParams, clip: ClipFeatures) -> tuple[Tensor, Tensor]:
    """Holistic rows (N_f, d) and fine-grained rows (N_f, d)."""
    hol = encode_holistic(params, clip)
    rows = [reshape(encode_frame(params, f), (1, -1)) for f in clip.frames]
    fine = concat(rows, axis=0)
    return hol, fine
