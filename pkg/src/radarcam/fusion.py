"""Intensity-gated deformable cross-attention over the BEV grid.

Radar features query camera features. A learned gate squashes each
modality's confidence into (0, 1): the radar-side gate rescales the
sampling offsets predicted per query, the camera-side gate rescales the
similarity logits before the softmax, so attention is biased toward
high-confidence keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    ParamStore,
    Tensor,
    affine,
    bilinear_sample_many,
    compose,
    reshape,
    sigmoid,
    softmax,
    transpose,
)


@dataclass(frozen=True)
class FusionConfig:
    heads: int = 1
    points: int = 4
    offset_scale: float = 2.0
    residual: bool = True

    def __post_init__(self):
        if self.heads != 1:
            raise ValueError("only single-head attention is supported")
        if self.points < 1:
            raise ValueError("need at least one sampling point per query")


def gate(intensity, params: ParamStore) -> Tensor:
    """Confidence squashing: sigma(w * intensity + b), strictly increasing
    in its pre-activation."""
    x = intensity if isinstance(intensity, Tensor) else Tensor(np.asarray([float(intensity)]))
    if x.ndim == 0:
        x = reshape(x, (1,))
    return sigmoid(affine(x, params["fuse.gate.w"], params["fuse.gate.b"]))


def _pair_dot(a: Tensor, b: Tensor) -> Tensor:
    """out[q, p] = sum_c a[q, p, c] * b[q, c]."""
    y = np.einsum("qpc,qc->qp", a.data, b.data)

    def vjp(g: np.ndarray):
        da = g[:, :, None] * b.data[:, None, :]
        db = np.einsum("qp,qpc->qc", g, a.data)
        return da, db

    return compose(y, (a, b), vjp)


def _weighted_sum(w: Tensor, v: Tensor) -> Tensor:
    """out[q, c] = sum_p w[q, p] * v[q, p, c]."""
    y = np.einsum("qp,qpc->qc", w.data, v.data)

    def vjp(g: np.ndarray):
        dw = np.einsum("qc,qpc->qp", g, v.data)
        dv = w.data[:, :, None] * g[:, None, :]
        return dw, dv

    return compose(y, (w, v), vjp)


def deform_attn_fuse(
    f_radar: Tensor,
    f_camera: Tensor,
    i_camera: Tensor,
    i_radar: Tensor,
    cfg: FusionConfig,
    params: ParamStore,
    with_weights: bool = False,
):
    """Fuse camera features into radar queries with gated deformable attention.

    Per query cell: the query vector predicts ``cfg.points`` offsets through
    an affine head; offsets are scaled by ``cfg.offset_scale`` cells and by
    the radar gate at the query. Keys and values are bilinearly sampled from
    the camera map at the offset locations; logits q.k / sqrt(C) are scaled
    by the camera gate at each sampled location, softmaxed, and the weighted
    values are added back onto the query (residual, unless disabled).
    """
    if f_radar.ndim != 3 or f_radar.dims != f_camera.dims:
        raise ValueError(
            f"feature maps must share [C,H,W] dims, got {f_radar.dims} vs {f_camera.dims}"
        )
    c, rows, cols = f_radar.dims
    if i_camera.dims != (1, rows, cols) or i_radar.dims != (1, rows, cols):
        raise ValueError("intensity maps must be [1,H,W] on the same grid")
    n_q = rows * cols
    p = cfg.points

    queries = reshape(transpose(f_radar, (1, 2, 0)), (n_q, c))
    # radar confidence at each query cell is sensor data, not a learned map
    i_r_cells = Tensor(i_radar.data.reshape(n_q, 1).copy())
    gate_r = sigmoid(affine(i_r_cells, params["fuse.gate.w"], params["fuse.gate.b"]))

    raw_off = affine(queries, params["fuse.offset.w"], params["fuse.offset.b"])
    offsets = reshape(raw_off, (n_q, p, 2)) * cfg.offset_scale
    offsets = offsets * reshape(gate_r, (n_q, 1, 1))
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    base = np.stack([cc.reshape(-1), rr.reshape(-1)], axis=-1).astype(f_radar.data.dtype)
    positions = offsets + Tensor(base.reshape(n_q, 1, 2))

    keys = bilinear_sample_many(f_camera, positions)  # [Q,P,C], doubles as values
    i_c_samples = bilinear_sample_many(i_camera, positions)  # [Q,P,1]
    gate_c = sigmoid(
        affine(i_c_samples, params["fuse.gate.w"], params["fuse.gate.b"])
    )

    sim = _pair_dot(keys, queries) * (1.0 / math.sqrt(c))
    logits = sim * reshape(gate_c, (n_q, p))
    weights = softmax(logits, axis=1)
    attended = _weighted_sum(weights, keys)
    fused = reshape(transpose(attended, (1, 0)), (c, rows, cols))
    if cfg.residual:
        fused = f_radar + fused
    if with_weights:
        return fused, weights
    return fused
