"""Metric-to-cell mappings shared by every BEV stage."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BevGridSpec:
    """Rectangular top-down grid: rows index y, columns index x.

    Cells are half-open [edge, edge + step) with the top edge closed, so a
    point exactly at (x_min, y_min) lands in cell (0, 0) and a point at
    (x_max, y_max) lands in the last cell.
    """

    x_min: float = -51.2
    x_max: float = 51.2
    y_min: float = -51.2
    y_max: float = 51.2
    rows: int = 32
    cols: int = 32

    def __post_init__(self):
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("grid extents must be positive")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one cell per axis")

    @property
    def step_x(self) -> float:
        return (self.x_max - self.x_min) / self.cols

    @property
    def step_y(self) -> float:
        return (self.y_max - self.y_min) / self.rows

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        """(row, col) containing the point, or None when out of range."""
        if not (self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max):
            return None
        col = min(int((x - self.x_min) / self.step_x), self.cols - 1)
        row = min(int((y - self.y_min) / self.step_y), self.rows - 1)
        return row, col

    def cells_of(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized flat cell index per point; -1 where out of range."""
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        cols = np.minimum((xs - self.x_min) // self.step_x, self.cols - 1).astype(np.int64)
        rows = np.minimum((ys - self.y_min) // self.step_y, self.rows - 1).astype(np.int64)
        flat = rows * self.cols + cols
        inside = (
            (xs >= self.x_min)
            & (xs <= self.x_max)
            & (ys >= self.y_min)
            & (ys <= self.y_max)
        )
        return np.where(inside, flat, -1)

    def continuous_cell(self, x: float, y: float) -> tuple[float, float]:
        """Fractional (row, col) position of a metric point."""
        return (y - self.y_min) / self.step_y - 0.5, (x - self.x_min) / self.step_x - 0.5


@dataclass(frozen=True)
class VoxelSpec:
    """3-D voxel sizes plus the vertical crop applied before voxelizing."""

    size_x: float = 0.1
    size_y: float = 0.1
    size_z: float = 0.2
    z_min: float = -5.0
    z_max: float = 3.0

    def __post_init__(self):
        if min(self.size_x, self.size_y, self.size_z) <= 0:
            raise ValueError("voxel sizes must be positive")
        if self.z_max <= self.z_min:
            raise ValueError("voxel z range must be positive")


def center_gaussian(
    grid: BevGridSpec, x: float, y: float, extent_x: float, extent_y: float
) -> np.ndarray:
    """[rows, cols] Gaussian bump peaking at exactly 1 in the center cell.

    Spread is one third of the metric extent per axis, floored at one cell,
    and offsets are measured cell-to-cell from the snapped center so the
    peak value is exact.
    """
    cell = grid.cell_of(x, y)
    out = np.zeros((grid.rows, grid.cols), dtype=np.float64)
    if cell is None:
        return out
    r0, c0 = cell
    sigma_c = max(extent_x / grid.step_x / 3.0, 1.0)
    sigma_r = max(extent_y / grid.step_y / 3.0, 1.0)
    rr = np.arange(grid.rows, dtype=np.float64)[:, None] - r0
    cc = np.arange(grid.cols, dtype=np.float64)[None, :] - c0
    out = np.exp(-0.5 * ((cc / sigma_c) ** 2 + (rr / sigma_r) ** 2))
    return out


def wrap_angle(a: float) -> float:
    """Map an angle into (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a
