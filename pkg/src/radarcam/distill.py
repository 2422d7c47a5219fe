"""Distillation losses: intensity-blended radar guidance, spatially weighted
feature and response transfer, and label-feature supervision.

Teacher-side inputs (LiDAR features, teacher head outputs, label features)
are detached on entry, so no gradient ever reaches their producers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grids import BevGridSpec, center_gaussian
from .head import Box3D, HeadOutput, soft_focal_terms
from .tensor import (
    ParamStore,
    Tensor,
    absolute,
    clamp,
    conv2d,
    sum_axis,
)


@dataclass
class BlendWeights:
    """Cellwise convex blend: w_lidar + w_radar = 1."""

    w_lidar: Tensor
    w_radar: Tensor
    lambda_blend: Tensor


@dataclass
class SoftLabelMask:
    """Gaussian box-center mask in [0, 1] with a division guard."""

    values: Tensor
    eps_guard: float = 1e-6


def blend(
    f_lidar: Tensor, f_radar: Tensor, i_lidar: Tensor, lambda_blend: Tensor
) -> tuple[Tensor, BlendWeights]:
    """Convex mix of LiDAR and radar features driven by LiDAR intensity.

    w_lidar = clamp(lambda * intensity, 0, 1) broadcast over channels; the
    LiDAR features are treated as constants while the learnable scale and
    the radar features keep their gradients.
    """
    if f_lidar.dims != f_radar.dims:
        raise ValueError(f"feature dims differ: {f_lidar.dims} vs {f_radar.dims}")
    if i_lidar.dims != (1,) + f_radar.dims[1:]:
        raise ValueError(f"intensity map {i_lidar.dims} does not match {f_radar.dims}")
    fl = f_lidar.detach()
    w_lidar = clamp(lambda_blend * i_lidar, 0.0, 1.0)
    w_radar = 1.0 - w_lidar
    blended = w_lidar * fl + w_radar * f_radar
    return blended, BlendWeights(w_lidar=w_lidar, w_radar=w_radar, lambda_blend=lambda_blend)


def igfm_loss(f_radar: Tensor, f_lidar: Tensor, f_blend: Tensor, alpha: float) -> Tensor:
    """alpha * mean((Fr - Fl)^2) + (1 - alpha) * mean((Fr - blend)^2)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    if f_radar.dims != f_lidar.dims or f_radar.dims != f_blend.dims:
        raise ValueError("igfm_loss needs matching dims")
    fl = f_lidar.detach()
    align = f_radar - fl
    consist = f_radar - f_blend
    return alpha * (align * align).mean() + (1.0 - alpha) * (consist * consist).mean()


def swfd_loss(
    f_lidar: Tensor, f_fused: Tensor, i_lidar: Tensor, params: ParamStore
) -> Tensor:
    """Intensity-weighted squared feature gap after a 1x1 channel adapter.

    Per cell: intensity * ||Fl - adapter(F_fused)||^2 summed over channels,
    then averaged over cells. LiDAR features are detached.
    """
    fl = f_lidar.detach()
    adapted = conv2d(f_fused, params["distill.beta.w"], params["distill.beta.b"])
    if adapted.dims != fl.dims:
        raise ValueError("adapter output does not match the LiDAR feature dims")
    diff = fl - adapted
    cell_sq = sum_axis(diff * diff, axis=0, keepdims=True)
    return (i_lidar.detach() * cell_sq).mean()


def swrd_loss(teacher: HeadOutput, student: HeadOutput, i_lidar: Tensor) -> Tensor:
    """Intensity-weighted response gap: focal on heatmaps plus L1 on boxes.

    The classification term blends the focal branches by the (soft)
    teacher heatmap; both terms are summed over channels per cell and the
    weighted map is averaged over cells. Teacher outputs are detached.
    """
    t_heat = teacher.heatmap.detach()
    t_bbox = teacher.bbox.detach()
    if t_heat.dims != student.heatmap.dims or t_bbox.dims != student.bbox.dims:
        raise ValueError("teacher and student head dims differ")
    cls_cells = sum_axis(soft_focal_terms(student.heatmap, t_heat.data), axis=0, keepdims=True)
    bbox_cells = sum_axis(absolute(student.bbox - t_bbox), axis=0, keepdims=True)
    return (i_lidar.detach() * (cls_cells + bbox_cells)).mean()


def soft_label_mask(
    boxes: Sequence[Box3D], grid: BevGridSpec, eps: float = 1e-6
) -> SoftLabelMask:
    """Cellwise max of per-box Gaussians, 1 at each box's center cell."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    mask = np.zeros((grid.rows, grid.cols))
    for box in boxes:
        mask = np.maximum(mask, center_gaussian(grid, box.x, box.y, box.l, box.w))
    return SoftLabelMask(values=Tensor(mask.reshape(1, grid.rows, grid.cols)), eps_guard=eps)


def ld_loss(f_label: Tensor, f_fused: Tensor, mask: SoftLabelMask) -> Tensor:
    """Masked squared gap to the label features, normalized by mask mass."""
    flabel = f_label.detach()
    if flabel.dims != f_fused.dims:
        raise ValueError("label and fused feature dims differ")
    diff = flabel - f_fused
    cell_sq = sum_axis(diff * diff, axis=0, keepdims=True)
    weighted = (mask.values.detach() * cell_sq).sum()
    denom = float(mask.values.data.sum()) + mask.eps_guard
    return weighted * (1.0 / denom)


def label_encode(
    boxes: Sequence[Box3D], grid: BevGridSpec, params: ParamStore, n_classes: int
) -> Tensor:
    """Ground-truth boxes rendered as a BEV feature map.

    Each box contributes its attribute vector (class one-hot, sizes, yaw
    sine/cosine) under its center Gaussian; overlaps accumulate. One conv
    layer mixes the channels. Deterministic given the boxes and params.
    """
    weight = params["label.conv.w"]
    n_attr = n_classes + 5
    if weight.dims[1] != n_attr:
        raise ValueError(f"label conv expects {weight.dims[1]} channels, built {n_attr}")
    canvas = np.zeros((n_attr, grid.rows, grid.cols))
    for box in boxes:
        if box.cls >= n_classes:
            raise ValueError(f"class {box.cls} outside [0, {n_classes})")
        bump = center_gaussian(grid, box.x, box.y, box.l, box.w)
        attrs = np.zeros(n_attr)
        attrs[box.cls] = 1.0
        attrs[n_classes : n_classes + 3] = (box.l, box.w, box.h)
        attrs[n_classes + 3] = math.sin(box.yaw)
        attrs[n_classes + 4] = math.cos(box.yaw)
        canvas += attrs[:, None, None] * bump[None, :, :]
    encoded = conv2d(Tensor(canvas), weight, params["label.conv.b"])
    return encoded.detach()
