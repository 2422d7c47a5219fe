"""Camera branch: perspective context, depth bins, frustum lift, BEV splat.

The toy camera model is a ground-plane pinhole: each view has a yaw and a
planar translation, columns map to azimuth through a horizontal focal
length, and rows encode height over planar range. That is enough geometry
to exercise lifting and splatting without real calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grids import BevGridSpec
from .tensor import ParamStore, Tensor, compose, conv2d, softmax, tanh


@dataclass(frozen=True)
class CameraConfig:
    n_views: int = 2
    in_channels: int = 4
    channels: int = 8
    img_h: int = 16
    img_w: int = 16
    depth_bins: int = 16
    d_min: float = 1.0
    d_max: float = 33.0
    fov: float = math.pi / 2
    yaws: tuple[float, ...] = (0.0, math.pi)
    positions: tuple[tuple[float, float], ...] = ((0.0, 0.0), (0.0, 0.0))

    def __post_init__(self):
        if self.n_views < 1:
            raise ValueError("need at least one view")
        if self.depth_bins < 2:
            raise ValueError("need at least two depth bins")
        if not 0.0 < self.d_min < self.d_max:
            raise ValueError("depth range must satisfy 0 < d_min < d_max")
        if len(self.yaws) != self.n_views or len(self.positions) != self.n_views:
            raise ValueError("per-view pose lists must match n_views")
        if not 0.0 < self.fov < math.pi:
            raise ValueError("fov must lie in (0, pi)")

    @property
    def fx(self) -> float:
        return (self.img_w - 1) / (2.0 * math.tan(self.fov / 2.0))

    @property
    def cx(self) -> float:
        return (self.img_w - 1) / 2.0

    @property
    def cy(self) -> float:
        return (self.img_h - 1) / 2.0

    @property
    def bin_width(self) -> float:
        return (self.d_max - self.d_min) / self.depth_bins

    def bin_centers(self) -> np.ndarray:
        return self.d_min + (np.arange(self.depth_bins) + 0.5) * self.bin_width

    def column_azimuth(self, u: float) -> float:
        return math.atan((u - self.cx) / self.fx)


def project_point(
    cfg: CameraConfig, view: int, x: float, y: float, z: float
) -> tuple[int, int, float] | None:
    """Pixel (u, v) and planar range of a world point in one view.

    Returns None when the point is behind the camera, outside the field of
    view, or off the image.
    """
    tx, ty = cfg.positions[view]
    yaw = cfg.yaws[view]
    dx, dy = x - tx, y - ty
    fwd = dx * math.cos(yaw) + dy * math.sin(yaw)
    lat = -dx * math.sin(yaw) + dy * math.cos(yaw)
    if fwd <= 1e-9:
        return None
    azimuth = math.atan2(lat, fwd)
    if abs(azimuth) > cfg.fov / 2.0:
        return None
    rho = math.hypot(fwd, lat)
    u = int(round(cfg.cx + cfg.fx * math.tan(azimuth)))
    v = int(round(cfg.cy - cfg.fx * z / rho))
    if not (0 <= u < cfg.img_w and 0 <= v < cfg.img_h):
        return None
    return u, v, rho


def context_and_depth(
    feat: Tensor, params: ParamStore, cfg: CameraConfig
) -> tuple[Tensor, Tensor]:
    """Context features and a per-pixel depth distribution from raw features.

    Two small conv stacks share the input: the context head emits
    ``cfg.channels`` planes, the depth head emits ``cfg.depth_bins`` logits
    normalized with a softmax so every pixel's bins sum to one.
    """
    if feat.ndim != 4 or feat.dims[1] != cfg.in_channels:
        raise ValueError(
            f"camera features must be [N,{cfg.in_channels},H,W], got {feat.dims}"
        )
    hidden = tanh(conv2d(feat, params["cam.context.conv1.w"], params["cam.context.conv1.b"]))
    context = conv2d(hidden, params["cam.context.conv2.w"], params["cam.context.conv2.b"])
    hidden_d = tanh(conv2d(feat, params["cam.depth.conv1.w"], params["cam.depth.conv1.b"]))
    logits = conv2d(hidden_d, params["cam.depth.conv2.w"], params["cam.depth.conv2.b"])
    depth = softmax(logits, axis=1)
    if context.dims[1] != cfg.channels or depth.dims[1] != cfg.depth_bins:
        raise ValueError("conv stacks disagree with the camera config")
    return context, depth


def lift_to_frustum(context: Tensor, depth: Tensor) -> Tensor:
    """out[n,c,d,v,u] = context[n,c,v,u] * depth[n,d,v,u]."""
    if context.ndim != 4 or depth.ndim != 4:
        raise ValueError("lift_to_frustum expects [N,C,H,W] and [N,D,H,W]")
    n, _, h, w = context.dims
    if depth.dims[0] != n or depth.dims[2:] != (h, w):
        raise ValueError(f"context {context.dims} and depth {depth.dims} disagree")
    y = np.einsum("ncvu,ndvu->ncdvu", context.data, depth.data)

    def vjp(g: np.ndarray):
        dc = np.einsum("ncdvu,ndvu->ncvu", g, depth.data)
        dd = np.einsum("ncdvu,ncvu->ndvu", g, context.data)
        return dc, dd

    return compose(y, (context, depth), vjp)


@dataclass
class SplatStats:
    """Bookkeeping for frustum cells that fell outside the grid."""

    dropped_cells: int = 0
    dropped_mass: float = 0.0
    splatted_cells: int = 0


@lru_cache(maxsize=8)
def frustum_cell_index(cfg: CameraConfig, grid: BevGridSpec) -> np.ndarray:
    """Flat BEV cell per (view, depth bin, column); -1 when out of range."""
    idx = np.full((cfg.n_views, cfg.depth_bins, cfg.img_w), -1, dtype=np.int64)
    centers = cfg.bin_centers()
    for n in range(cfg.n_views):
        tx, ty = cfg.positions[n]
        yaw = cfg.yaws[n]
        for u in range(cfg.img_w):
            ang = yaw + cfg.column_azimuth(u)
            for d, rho in enumerate(centers):
                cell = grid.cell_of(tx + rho * math.cos(ang), ty + rho * math.sin(ang))
                if cell is not None:
                    idx[n, d, u] = cell[0] * grid.cols + cell[1]
    return idx


def splat_to_bev(
    frustum: Tensor, cfg: CameraConfig, grid: BevGridSpec
) -> tuple[Tensor, SplatStats]:
    """Sum-splat frustum features into BEV cells through the toy geometry.

    Every frustum cell (n, c, d, v, u) maps through its bin-center range
    and view pose to a metric point; all rows v of one column share that
    point. Out-of-range cells are dropped silently and tallied in the
    returned stats.
    """
    if frustum.ndim != 5:
        raise ValueError("frustum must be [N,C,D,H,W]")
    n, c, d, h, w = frustum.dims
    if (n, d, h, w) != (cfg.n_views, cfg.depth_bins, cfg.img_h, cfg.img_w):
        raise ValueError(f"frustum dims {frustum.dims} disagree with the camera config")
    idx = frustum_cell_index(cfg, grid)
    flat_idx = idx.reshape(-1)
    valid = flat_idx >= 0
    # [N,D,W,C] column sums over rows; each row is its own frustum cell but
    # all rows of a column land in the same BEV cell.
    col_sum = frustum.data.sum(axis=3).transpose(0, 2, 3, 1).reshape(-1, c)
    out_flat = np.zeros((grid.rows * grid.cols, c), dtype=frustum.data.dtype)
    np.add.at(out_flat, flat_idx[valid], col_sum[valid])
    out = np.ascontiguousarray(out_flat.T.reshape(c, grid.rows, grid.cols))
    stats = SplatStats(
        dropped_cells=int((~valid).sum()) * h,
        dropped_mass=float(col_sum[~valid].sum()),
        splatted_cells=int(valid.sum()) * h,
    )

    def vjp(g: np.ndarray):
        g_flat = g.reshape(c, -1).T  # [cells, C]
        picked = np.zeros((n * d * w, c), dtype=g.dtype)
        picked[valid] = g_flat[flat_idx[valid]]
        # undo the row sum: every row of a column receives the same grad
        per_col = picked.reshape(n, d, w, c).transpose(0, 3, 1, 2)  # [N,C,D,W]
        dfr = np.broadcast_to(per_col[:, :, :, None, :], (n, c, d, h, w)).copy()
        return (dfr,)

    return compose(out, (frustum,), vjp), stats
