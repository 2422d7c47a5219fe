"""Center-style detection head plus the supervised detection and depth losses."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .camera import CameraConfig, project_point
from .grids import BevGridSpec, center_gaussian
from .intensity import LidarPoint
from .tensor import (
    ParamStore,
    Tensor,
    absolute,
    compose,
    conv2d,
    tanh,
    safe_log,
    sigmoid,
)

REGRESSION_CHANNELS = 8  # dx, dy, z, log l, log w, log h, sin yaw, cos yaw


@dataclass(frozen=True)
class Box3D:
    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    yaw: float
    cls: int

    def __post_init__(self):
        if min(self.l, self.w, self.h) <= 0:
            raise ValueError("box sizes must be positive")
        if not -math.pi < self.yaw <= math.pi:
            raise ValueError(f"yaw {self.yaw} outside (-pi, pi]")
        if self.cls < 0:
            raise ValueError("class id must be non-negative")


@dataclass
class HeadOutput:
    """heatmap [K, rows, cols] in (0,1); bbox [8, rows, cols]."""

    heatmap: Tensor
    bbox: Tensor


def head_forward(features: Tensor, params: ParamStore, prefix: str = "head") -> HeadOutput:
    """Two small conv stacks; the heatmap goes through a sigmoid."""
    h = tanh(conv2d(features, params[f"{prefix}.heat.conv1.w"], params[f"{prefix}.heat.conv1.b"]))
    heat = sigmoid(conv2d(h, params[f"{prefix}.heat.conv2.w"], params[f"{prefix}.heat.conv2.b"]))
    b = tanh(conv2d(features, params[f"{prefix}.box.conv1.w"], params[f"{prefix}.box.conv1.b"]))
    bbox = conv2d(b, params[f"{prefix}.box.conv2.w"], params[f"{prefix}.box.conv2.b"])
    return HeadOutput(heatmap=heat, bbox=bbox)


def target_heatmap(boxes: Sequence[Box3D], grid: BevGridSpec, n_classes: int) -> np.ndarray:
    """Gaussian-splatted center targets, one channel per class, merged by max."""
    out = np.zeros((n_classes, grid.rows, grid.cols))
    for box in boxes:
        if box.cls >= n_classes:
            raise ValueError(f"class {box.cls} outside [0, {n_classes})")
        bump = center_gaussian(grid, box.x, box.y, box.l, box.w)
        out[box.cls] = np.maximum(out[box.cls], bump)
    return out


def box_regression_targets(
    boxes: Sequence[Box3D], grid: BevGridSpec
) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Center cells and their 8-channel regression targets; off-grid boxes drop."""
    cells: list[tuple[int, int]] = []
    rows = []
    for box in boxes:
        cell = grid.cell_of(box.x, box.y)
        if cell is None:
            continue
        r, c = cell
        fr, fc = grid.continuous_cell(box.x, box.y)
        rows.append(
            (
                fc - c,
                fr - r,
                box.z,
                math.log(box.l),
                math.log(box.w),
                math.log(box.h),
                math.sin(box.yaw),
                math.cos(box.yaw),
            )
        )
        cells.append((r, c))
    targets = np.asarray(rows, dtype=np.float64).reshape(len(rows), REGRESSION_CHANNELS)
    return cells, targets


def gather_cells(fmap: Tensor, cells: Sequence[tuple[int, int]]) -> Tensor:
    """Read the channel vector of each (row, col) cell: [n, C]."""
    rr = np.array([c[0] for c in cells], dtype=np.int64)
    cc = np.array([c[1] for c in cells], dtype=np.int64)
    y = np.ascontiguousarray(fmap.data[:, rr, cc].T)

    def vjp(g: np.ndarray):
        dm = np.zeros_like(fmap.data)
        np.add.at(dm.transpose(1, 2, 0), (rr, cc), g)
        return (dm,)

    return compose(y, (fmap,), vjp)


def focal_terms(pred: Tensor, target: np.ndarray) -> Tensor:
    """Penalty-reduced focal terms against a Gaussian-splatted target map.

    Cells where the target is exactly 1 are positives; elsewhere the
    penalty is reduced by (1 - target)^4. Returns the per-entry loss map.
    """
    t = np.asarray(target, dtype=pred.data.dtype)
    if t.shape != pred.data.shape:
        raise ValueError(f"target shape {t.shape} does not match prediction {pred.dims}")
    pos = Tensor((t == 1.0).astype(pred.data.dtype))
    neg_pen = Tensor(((1.0 - t) ** 4).astype(pred.data.dtype))
    one = 1.0
    pos_term = pos * (one - pred) * (one - pred) * safe_log(pred)
    neg_term = (one - pos) * neg_pen * pred * pred * safe_log(one - pred)
    return -(pos_term + neg_term)


def soft_focal_terms(pred: Tensor, target: np.ndarray) -> Tensor:
    """Focal terms blended by a soft target in [0, 1].

    The positive branch is weighted by the target value itself and the
    negative branch keeps the (1 - target)^4 penalty reduction, so hard 0/1
    targets recover the standard form.
    """
    t = np.asarray(target, dtype=pred.data.dtype)
    if t.shape != pred.data.shape:
        raise ValueError(f"target shape {t.shape} does not match prediction {pred.dims}")
    tw = Tensor(t)
    neg_pen = Tensor(((1.0 - t) ** 4).astype(pred.data.dtype))
    one = 1.0
    pos_term = tw * (one - pred) * (one - pred) * safe_log(pred)
    neg_term = (one - tw) * neg_pen * pred * pred * safe_log(one - pred)
    return -(pos_term + neg_term)


def det_loss_from_targets(
    pred: HeadOutput,
    heat_target: np.ndarray,
    cells: Sequence[tuple[int, int]],
    reg_targets: np.ndarray,
    n_boxes: int,
) -> Tensor:
    focal = focal_terms(pred.heatmap, heat_target).sum() * (1.0 / max(1, n_boxes))
    if not cells:
        return focal
    picked = gather_cells(pred.bbox, cells)
    l1 = absolute(picked - Tensor(reg_targets.astype(pred.bbox.data.dtype))).sum()
    return focal + l1 * (1.0 / (len(cells) * REGRESSION_CHANNELS))


def det_loss(pred: HeadOutput, boxes: Sequence[Box3D], grid: BevGridSpec) -> Tensor:
    """Gaussian focal on the heatmap plus L1 on regression at center cells."""
    n_classes = pred.heatmap.dims[0]
    heat_target = target_heatmap(boxes, grid, n_classes)
    cells, targets = box_regression_targets(boxes, grid)
    return det_loss_from_targets(pred, heat_target, cells, targets, len(boxes))


def depth_supervision(
    lidar: Sequence[LidarPoint], cfg: CameraConfig
) -> list[tuple[int, int, int, int]]:
    """(view, bin, row, col) for every LiDAR point visible in a view."""
    hits: list[tuple[int, int, int, int]] = []
    for point in lidar:
        for view in range(cfg.n_views):
            proj = project_point(cfg, view, point.x, point.y, point.z)
            if proj is None:
                continue
            u, v, rho = proj
            if not cfg.d_min <= rho < cfg.d_max:
                continue
            d = min(int((rho - cfg.d_min) / cfg.bin_width), cfg.depth_bins - 1)
            hits.append((view, d, v, u))
    return hits


def depth_nll(depth: Tensor, hits: Sequence[tuple[int, int, int, int]]) -> Tensor:
    """Mean negative log-likelihood of the supervised depth bins."""
    if not hits:
        return Tensor(np.zeros((), dtype=depth.data.dtype))
    idx = tuple(np.array(col, dtype=np.int64) for col in zip(*hits))
    eps = 1e-12
    vals = depth.data[idx]
    floored = np.maximum(vals, eps)
    y = np.asarray(-np.log(floored).mean(), dtype=depth.data.dtype)
    n = len(hits)

    def vjp(g: np.ndarray):
        dd = np.zeros_like(depth.data)
        contrib = -g.reshape(()) / (n * floored) * (vals > eps)
        np.add.at(dd, idx, contrib)
        return (dd,)

    return compose(y, (depth,), vjp)


def depth_loss(depth: Tensor, lidar: Sequence[LidarPoint], cfg: CameraConfig) -> Tensor:
    """Cross-entropy between predicted depth bins and projected LiDAR points.

    Every (point, view) hit supervises one pixel with the one-hot bin of
    the point's planar range; pixels without hits are ignored and an empty
    projection set costs exactly zero.
    """
    if depth.ndim != 4 or depth.dims[1] != cfg.depth_bins:
        raise ValueError(f"depth must be [N,{cfg.depth_bins},H,W], got {depth.dims}")
    return depth_nll(depth, depth_supervision(lidar, cfg))
