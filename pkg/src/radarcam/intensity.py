"""Confidence maps: radar return strength, camera confidence, LiDAR intensity.

All three maps live on the BEV grid as [1, rows, cols] tensors with values
in [0, 1]. The radar and LiDAR maps are pure functions of sensor data; the
camera map is a learned single-channel conv followed by a sigmoid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grids import BevGridSpec, VoxelSpec
from .radar import RCS_RANGE, RadarPoint, normalize_rcs
from .tensor import ParamStore, Tensor, conv2d, sigmoid


@dataclass(frozen=True)
class LidarPoint:
    """One LiDAR return with normalized reflectance in [0, 1]."""

    x: float
    y: float
    z: float
    intensity: float
    t: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"LiDAR intensity {self.intensity} outside [0, 1]")


@dataclass(frozen=True)
class IntensityCoeffs:
    """Fixed scalars weighting RCS and Doppler speed in the radar score."""

    alpha_rcs: float = 2.0
    beta_vel: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.alpha_rcs) and math.isfinite(self.beta_vel)):
            raise ValueError("intensity coefficients must be finite")


def normalize_lidar_intensity(raw: float) -> float:
    """Ingest rule for raw 8-bit reflectance values."""
    return min(max(raw / 255.0, 0.0), 1.0)


def radar_intensity(
    point: RadarPoint,
    coeffs: IntensityCoeffs,
    rcs_range: tuple[float, float] = RCS_RANGE,
) -> float:
    """sigma(alpha * RCS_norm + beta * |v|) in (0, 1)."""
    pre = coeffs.alpha_rcs * normalize_rcs(point.rcs, rcs_range) + coeffs.beta_vel * point.doppler_speed
    if pre >= 0:
        return 1.0 / (1.0 + math.exp(-pre))
    e = math.exp(pre)
    return e / (1.0 + e)


def radar_intensity_bev(
    points: Sequence[RadarPoint],
    coeffs: IntensityCoeffs,
    grid: BevGridSpec,
    rcs_range: tuple[float, float] = RCS_RANGE,
) -> Tensor:
    """Per-cell maximum of point intensities; empty cells hold 0."""
    out = np.zeros((1, grid.rows, grid.cols))
    for p in points:
        cell = grid.cell_of(p.x, p.y)
        if cell is None:
            continue
        r, c = cell
        out[0, r, c] = max(out[0, r, c], radar_intensity(p, coeffs, rcs_range))
    return Tensor(out)


def camera_intensity(feat: Tensor, params: ParamStore) -> Tensor:
    """Single-channel confidence: sigma(conv(features)).

    Accepts the BEV map [C, rows, cols] (giving [1, rows, cols]) or raw
    per-view features [N, C, H, W] (giving [N, 1, H, W]).
    """
    if feat.ndim not in (3, 4):
        raise ValueError("camera_intensity expects [C,H,W] or [N,C,H,W]")
    return sigmoid(conv2d(feat, params["cam.intensity.conv.w"], params["cam.intensity.conv.b"]))


def lidar_intensity_bev(
    points: Sequence[LidarPoint], voxel: VoxelSpec, grid: BevGridSpec
) -> Tensor:
    """Two-stage intensity map: voxel means, then per-cell mean of voxel means.

    Points outside the voxel z-crop or the grid are dropped. A cell's value
    is the sum of the voxel means landing in it divided by max(1, count),
    so empty cells read exactly 0.
    """
    sums: dict[tuple[int, int, int], float] = {}
    counts: dict[tuple[int, int, int], int] = {}
    for p in points:
        if not voxel.z_min <= p.z <= voxel.z_max:
            continue
        if grid.cell_of(p.x, p.y) is None:
            continue
        key = (
            int(math.floor((p.x - grid.x_min) / voxel.size_x)),
            int(math.floor((p.y - grid.y_min) / voxel.size_y)),
            int(math.floor((p.z - voxel.z_min) / voxel.size_z)),
        )
        sums[key] = sums.get(key, 0.0) + p.intensity
        counts[key] = counts.get(key, 0) + 1
    cell_sum = np.zeros((grid.rows, grid.cols))
    cell_count = np.zeros((grid.rows, grid.cols))
    for key, total in sums.items():
        mean = total / counts[key]
        cx = grid.x_min + (key[0] + 0.5) * voxel.size_x
        cy = grid.y_min + (key[1] + 0.5) * voxel.size_y
        cell = grid.cell_of(cx, cy)
        if cell is None:
            continue
        cell_sum[cell] += mean
        cell_count[cell] += 1
    out = cell_sum / np.maximum(1.0, cell_count)
    return Tensor(out.reshape(1, grid.rows, grid.cols))
