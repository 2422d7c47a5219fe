"""Radar branch: point embedding, learnable grid, lightweight BEV encoder."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grids import BevGridSpec
from .tensor import ParamStore, Tensor, affine, compose, conv2d, relu, stack, tanh

# Default dBsm window used to squeeze raw RCS into [0, 1] before embedding.
RCS_RANGE = (-10.0, 30.0)

# Divisors bringing x, y, z and Doppler speed to order one before the MLP;
# x, y use the default BEV half-range.
POINT_SCALES = (51.2, 51.2, 3.0, 10.0)


@dataclass(frozen=True)
class RadarPoint:
    """One radar return; velocities are ego-motion-compensated components."""

    x: float
    y: float
    z: float
    vx: float
    vy: float
    rcs: float

    @property
    def doppler_speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass
class RadarGrid:
    """Per-cell pooled embeddings plus a {0,1} occupancy mask."""

    features: Tensor
    occupancy: Tensor

    @property
    def channels(self) -> int:
        return self.features.dims[0]


def normalize_rcs(rcs: float, rcs_range: tuple[float, float] = RCS_RANGE) -> float:
    lo, hi = rcs_range
    return min(max((rcs - lo) / (hi - lo), 0.0), 1.0)


def point_features(
    points: Sequence[RadarPoint], rcs_range: tuple[float, float] = RCS_RANGE
) -> np.ndarray:
    """[M, 5] embedding inputs: scaled x, y, z, Doppler magnitude, RCS in [0,1]."""
    sx, sy, sz, sv = POINT_SCALES
    rows = [
        (p.x / sx, p.y / sy, p.z / sz, p.doppler_speed / sv, normalize_rcs(p.rcs, rcs_range))
        for p in points
    ]
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), 5)


def embed_matrix(
    points: Sequence[RadarPoint],
    params: ParamStore,
    rcs_range: tuple[float, float] = RCS_RANGE,
) -> Tensor:
    """All point embeddings at once as [M, C]; empty input gives [0, C]."""
    w1 = params["radar.embed.fc1.w"]
    c = params["radar.embed.fc2.w"].dims[1]
    if not points:
        return Tensor(np.zeros((0, c)))
    feats = Tensor(point_features(points, rcs_range).astype(w1.data.dtype))
    hidden = relu(affine(feats, w1, params["radar.embed.fc1.b"]))
    return affine(hidden, params["radar.embed.fc2.w"], params["radar.embed.fc2.b"])


def embed_points(
    points: Sequence[RadarPoint],
    params: ParamStore,
    rcs_range: tuple[float, float] = RCS_RANGE,
) -> list[Tensor]:
    """One embedding vector per point (two affine layers, ReLU between)."""
    if not points:
        return []
    mat = embed_matrix(points, params, rcs_range)
    m, c = mat.dims
    out = []
    for i in range(m):
        row = mat.data[i]

        def vjp(g: np.ndarray, i: int = i):
            dm = np.zeros_like(mat.data)
            dm[i] = g
            return (dm,)

        out.append(compose(row, (mat,), vjp))
    return out


def grid_from_matrix(
    cells: np.ndarray, embeddings: Tensor, grid: BevGridSpec
) -> RadarGrid:
    """Channel-wise max pool of embeddings into their cells.

    ``cells`` holds a flat cell index per point (-1 drops the point).
    Unoccupied cells keep the zero vector; the winner bookkeeping routes
    gradients back to the pooled points.
    """
    m, c = embeddings.dims
    n_cells = grid.rows * grid.cols
    best = np.full((n_cells, c), -np.inf)
    winner = np.full((n_cells, c), -1, dtype=np.int64)
    for i in range(m):
        q = cells[i]
        if q < 0:
            continue
        row = embeddings.data[i]
        better = row > best[q]
        best[q][better] = row[better]
        winner[q][better] = i
    occupied = winner[:, 0] >= 0
    feat = np.where(occupied[:, None], best, 0.0).astype(embeddings.data.dtype)
    features_data = np.ascontiguousarray(feat.T.reshape(c, grid.rows, grid.cols))

    def vjp(g: np.ndarray):
        de = np.zeros_like(embeddings.data)
        g_flat = g.reshape(c, -1).T  # [cells, C]
        occ_idx = np.nonzero(occupied)[0]
        if occ_idx.size:
            rows = winner[occ_idx].reshape(-1)
            chans = np.tile(np.arange(c), occ_idx.size)
            np.add.at(de, (rows, chans), g_flat[occ_idx].reshape(-1))
        return (de,)

    features = compose(features_data, (embeddings,), vjp)
    occupancy = Tensor(
        occupied.reshape(1, grid.rows, grid.cols).astype(embeddings.data.dtype)
    )
    return RadarGrid(features=features, occupancy=occupancy)


def build_grid(
    points: Sequence[RadarPoint],
    embeddings: Sequence[Tensor],
    grid: BevGridSpec,
    channels: int | None = None,
) -> RadarGrid:
    """Pool per-point embeddings into a BEV grid by channel-wise max."""
    pts = list(points)
    embs = list(embeddings)
    if len(pts) != len(embs):
        raise ValueError(f"{len(pts)} points but {len(embs)} embeddings")
    if not pts:
        if channels is None:
            raise ValueError("an empty point set needs an explicit channel count")
        mat = Tensor(np.zeros((0, channels)))
        cells = np.zeros(0, dtype=np.int64)
    else:
        cells = grid.cells_of(
            np.array([p.x for p in pts]), np.array([p.y for p in pts])
        )
        mat = stack(embs, axis=0)
    return grid_from_matrix(cells, mat, grid)


def encode_radar(grid: RadarGrid, params: ParamStore) -> Tensor:
    """Two residual conv blocks; spatial dims are preserved end to end."""
    x = grid.features
    for block in ("block1", "block2"):
        h = tanh(conv2d(x, params[f"radar.enc.{block}.conv1.w"], params[f"radar.enc.{block}.conv1.b"]))
        h = conv2d(h, params[f"radar.enc.{block}.conv2.w"], params[f"radar.enc.{block}.conv2.b"])
        x = x + h
    return x
