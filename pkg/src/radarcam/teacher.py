"""Frozen LiDAR teacher at toy scale.

A fixed-seed two-layer conv encoder turns cell occupancy and mean
intensity into teacher features, and a frozen copy of the detection head
produces teacher responses. Nothing here is ever updated; outputs are
detached so no gradient can reach the frozen parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grids import BevGridSpec, VoxelSpec
from .head import HeadOutput, head_forward
from .intensity import LidarPoint, lidar_intensity_bev
from .tensor import ParamStore, Tensor, conv2d, tanh


@dataclass
class TeacherBundle:
    features: Tensor
    head: HeadOutput


def occupancy_map(points: Sequence[LidarPoint], grid: BevGridSpec) -> np.ndarray:
    occ = np.zeros((grid.rows, grid.cols))
    for p in points:
        cell = grid.cell_of(p.x, p.y)
        if cell is not None:
            occ[cell] = 1.0
    return occ


def teacher_forward(
    lidar: Sequence[LidarPoint],
    grid: BevGridSpec,
    params: ParamStore,
    voxel: VoxelSpec | None = None,
) -> TeacherBundle:
    """Teacher features and head responses from a LiDAR cloud.

    Inputs are the cell occupancy and the voxel-mean intensity map; an
    empty cloud therefore yields the bias response of the conv stack.
    """
    voxel = voxel if voxel is not None else VoxelSpec()
    occ = occupancy_map(lidar, grid)
    meanint = lidar_intensity_bev(lidar, voxel, grid).data[0]
    stacked = Tensor(np.stack([occ, meanint]))
    hidden = tanh(conv2d(stacked, params["teacher.enc.conv1.w"], params["teacher.enc.conv1.b"]))
    features = conv2d(hidden, params["teacher.enc.conv2.w"], params["teacher.enc.conv2.b"])
    features = features.detach()
    head = head_forward(features, params, prefix="teacher.head")
    return TeacherBundle(
        features=features,
        head=HeadOutput(heatmap=head.heatmap.detach(), bbox=head.bbox.detach()),
    )
