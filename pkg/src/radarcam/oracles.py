"""Brute-force reference implementations.

Each oracle recomputes an operation the slow, obvious way -- explicit
loops, scalar math, compensated sums -- sharing no code with the
vectorized path it certifies. The check suites and the test suite compare
the fast implementations against these on seeded random instances.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .grids import BevGridSpec, VoxelSpec


def compensated_sum(values) -> float:
    return math.fsum(float(v) for v in values)


def affine_loops(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    lead = x.shape[:-1]
    k_in, k_out = w.shape
    out = np.zeros(lead + (k_out,))
    for idx in np.ndindex(*lead) if lead else [()]:
        for j in range(k_out):
            acc = float(b[j])
            for i in range(k_in):
                acc += float(x[idx + (i,)]) * float(w[i, j])
            out[idx + (j,)] = acc
    return out


def outer_loops(c: np.ndarray, p: np.ndarray) -> np.ndarray:
    out = np.zeros((c.size, p.size))
    for i in range(c.size):
        for d in range(p.size):
            out[i, d] = float(c[i]) * float(p[d])
    return out


def conv2d_loops(x: np.ndarray, k: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Quadruple-loop correlation with zero padding, [C,H,W] input."""
    c_out, c_in, kh, kw = k.shape
    _, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((c_out, h, w))
    for o in range(c_out):
        for i in range(h):
            for j in range(w):
                acc = float(b[o])
                for c in range(c_in):
                    for a in range(kh):
                        for bb in range(kw):
                            ii = i + a - ph
                            jj = j + bb - pw
                            if 0 <= ii < h and 0 <= jj < w:
                                acc += float(x[c, ii, jj]) * float(k[o, c, a, bb])
                out[o, i, j] = acc
    return out


def bilinear_corners(fmap: np.ndarray, u: float, v: float) -> np.ndarray:
    """Closed-form four-corner interpolation with zero padding, [C,H,W]."""
    c, h, w = fmap.shape
    x0, y0 = math.floor(u), math.floor(v)
    fx, fy = u - x0, v - y0
    out = np.zeros(c)
    for dx, dy, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi, yi = x0 + dx, y0 + dy
        if 0 <= xi < w and 0 <= yi < h:
            for ch in range(c):
                out[ch] += wgt * float(fmap[ch, yi, xi])
    return out


def max_pool_grid_loops(
    xs: Sequence[float],
    ys: Sequence[float],
    embeddings: np.ndarray,
    grid: BevGridSpec,
) -> np.ndarray:
    """Per-cell elementwise max over member embeddings; empty cells zero.

    Cell membership is computed inline from first principles rather than
    through the grid's own mapping helper.
    """
    m, c = embeddings.shape
    out = np.zeros((c, grid.rows, grid.cols))
    filled = np.zeros((grid.rows, grid.cols), dtype=bool)
    step_x = (grid.x_max - grid.x_min) / grid.cols
    step_y = (grid.y_max - grid.y_min) / grid.rows
    for i in range(m):
        x, y = float(xs[i]), float(ys[i])
        if not (grid.x_min <= x <= grid.x_max and grid.y_min <= y <= grid.y_max):
            continue
        col = min(int((x - grid.x_min) / step_x), grid.cols - 1)
        row = min(int((y - grid.y_min) / step_y), grid.rows - 1)
        if not filled[row, col]:
            out[:, row, col] = embeddings[i]
            filled[row, col] = True
        else:
            out[:, row, col] = np.maximum(out[:, row, col], embeddings[i])
    return out


def splat_accumulate_loops(
    frustum: np.ndarray,
    cell_index: np.ndarray,
    rows: int,
    cols: int,
) -> tuple[np.ndarray, float]:
    """Point-list accumulation of frustum features into BEV cells.

    Walks every frustum cell one by one; returns the map and the dropped
    feature mass.
    """
    n, c, d, h, w = frustum.shape
    out = np.zeros((c, rows, cols))
    dropped = 0.0
    for ni in range(n):
        for di in range(d):
            for ui in range(w):
                flat = int(cell_index[ni, di, ui])
                for vi in range(h):
                    vec = frustum[ni, :, di, vi, ui]
                    if flat < 0:
                        dropped += float(vec.sum())
                    else:
                        out[:, flat // cols, flat % cols] += vec
    return out, dropped


def lidar_two_stage_mean(
    points, voxel: VoxelSpec, grid: BevGridSpec
) -> np.ndarray:
    """Literal two-stage mean: per-voxel means, then per-cell mean of means."""
    groups: dict[tuple[int, int, int], list[float]] = {}
    for p in points:
        if not voxel.z_min <= p.z <= voxel.z_max:
            continue
        if not (grid.x_min <= p.x <= grid.x_max and grid.y_min <= p.y <= grid.y_max):
            continue
        key = (
            math.floor((p.x - grid.x_min) / voxel.size_x),
            math.floor((p.y - grid.y_min) / voxel.size_y),
            math.floor((p.z - voxel.z_min) / voxel.size_z),
        )
        groups.setdefault(key, []).append(p.intensity)
    per_cell: dict[tuple[int, int], list[float]] = {}
    step_x = (grid.x_max - grid.x_min) / grid.cols
    step_y = (grid.y_max - grid.y_min) / grid.rows
    for key, vals in groups.items():
        mean = math.fsum(vals) / len(vals)
        cx = grid.x_min + (key[0] + 0.5) * voxel.size_x
        cy = grid.y_min + (key[1] + 0.5) * voxel.size_y
        if not (grid.x_min <= cx <= grid.x_max and grid.y_min <= cy <= grid.y_max):
            continue
        col = min(int((cx - grid.x_min) / step_x), grid.cols - 1)
        row = min(int((cy - grid.y_min) / step_y), grid.rows - 1)
        per_cell.setdefault((row, col), []).append(mean)
    out = np.zeros((grid.rows, grid.cols))
    for (row, col), means in per_cell.items():
        out[row, col] = math.fsum(means) / max(1, len(means))
    return out.reshape(1, grid.rows, grid.cols)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def deform_attention_loops(
    f_radar: np.ndarray,
    f_camera: np.ndarray,
    i_camera: np.ndarray,
    i_radar: np.ndarray,
    offset_w: np.ndarray,
    offset_b: np.ndarray,
    gate_w: float,
    gate_b: float,
    n_points: int,
    offset_scale: float,
    residual: bool,
) -> np.ndarray:
    """Query-by-query evaluation of the gated deformable fusion."""
    c, rows, cols = f_radar.shape
    out = np.zeros_like(f_radar, dtype=np.float64)
    for r in range(rows):
        for col in range(cols):
            q = f_radar[:, r, col].astype(np.float64)
            g_r = _sigmoid(gate_w * float(i_radar[0, r, col]) + gate_b)
            raw = affine_loops(q.reshape(1, c), offset_w, offset_b)[0]
            logits = []
            values = []
            for pi in range(n_points):
                du = raw[2 * pi] * offset_scale * g_r
                dv = raw[2 * pi + 1] * offset_scale * g_r
                u, v = col + du, r + dv
                key = bilinear_corners(f_camera, u, v)
                ic = bilinear_corners(i_camera, u, v)[0]
                g_c = _sigmoid(gate_w * ic + gate_b)
                sim = math.fsum(q[ch] * key[ch] for ch in range(c)) / math.sqrt(c)
                logits.append(sim * g_c)
                values.append(key)
            peak = max(logits)
            exps = [math.exp(l - peak) for l in logits]
            denom = math.fsum(exps)
            for pi in range(n_points):
                out[:, r, col] += (exps[pi] / denom) * values[pi]
            if residual:
                out[:, r, col] += q
    return out


def softmax_loops(x: np.ndarray) -> np.ndarray:
    """1-D softmax with compensated normalization."""
    peak = float(np.max(x))
    exps = [math.exp(float(v) - peak) for v in x]
    denom = math.fsum(exps)
    return np.array([e / denom for e in exps])
