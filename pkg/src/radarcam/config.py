"""Run configuration: defaults, strict JSON parsing, derived objects.

Unknown keys anywhere in a config file are an error so a misspelled loss
weight can never silently fall back to its default.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .camera import CameraConfig
from .fusion import FusionConfig
from .grids import BevGridSpec, VoxelSpec
from .intensity import IntensityCoeffs
from .objective import LossWeights
from .scene import SceneConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    steps: int = 200
    lr: float = 0.02
    precision: str = "f32"
    grid: BevGridSpec = field(default_factory=BevGridSpec)
    voxel: VoxelSpec = field(default_factory=VoxelSpec)
    camera: CameraConfig = field(default_factory=CameraConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    coeffs: IntensityCoeffs = field(default_factory=IntensityCoeffs)
    rcs_range: tuple[float, float] = (-10.0, 30.0)
    weights: LossWeights = field(default_factory=LossWeights)
    n_objects: int = 3
    n_classes: int = 3

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if self.rcs_range[1] <= self.rcs_range[0]:
            raise ValueError("rcs_range must be increasing")

    def scene_config(self) -> SceneConfig:
        return SceneConfig(
            n_objects=self.n_objects,
            n_classes=self.n_classes,
            x_range=(self.grid.x_min, self.grid.x_max),
            y_range=(self.grid.y_min, self.grid.y_max),
            camera=self.camera,
        )


_DEFAULT_JSON = {
    "seed": 0,
    "steps": 200,
    "lr": 0.02,
    "precision": "f32",
    "n_objects": 3,
    "n_classes": 3,
    "grid": {
        "x_min": -51.2,
        "x_max": 51.2,
        "y_min": -51.2,
        "y_max": 51.2,
        "rows": 32,
        "cols": 32,
    },
    "voxel": {"size_x": 0.1, "size_y": 0.1, "size_z": 0.2, "z_min": -5.0, "z_max": 3.0},
    "camera": {
        "n_views": 2,
        "in_channels": 4,
        "channels": 8,
        "img_h": 16,
        "img_w": 16,
        "depth_bins": 16,
        "d_min": 1.0,
        "d_max": 33.0,
        "fov_deg": 90.0,
        "yaws_deg": [0.0, 180.0],
    },
    "fusion": {"points": 4, "offset_scale": 2.0, "residual": True},
    "intensity": {"alpha_rcs": 2.0, "beta_vel": 0.5, "rcs_min": -10.0, "rcs_max": 30.0},
    "weights": {
        "l1": 0.3,
        "l2": 0.3,
        "l3": 100.0,
        "l4": 0.3,
        "l5": 0.3,
        "l6": 0.3,
        "alpha_igfm": 0.5,
        "lambda_blend": 1.0,
    },
}


def default_config_dict() -> dict:
    return json.loads(json.dumps(_DEFAULT_JSON))


def _merge(defaults: dict, user: dict, path: str) -> dict:
    out = dict(defaults)
    for key, value in user.items():
        if key not in defaults:
            raise ValueError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ValueError(f"config key {path + key!r} must be an object")
            out[key] = _merge(defaults[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def _build(doc: dict) -> RunConfig:
    cam = doc["camera"]
    n_views = int(cam["n_views"])
    yaws = tuple(math.radians(a) for a in cam["yaws_deg"])
    if len(yaws) != n_views:
        raise ValueError("camera.yaws_deg must list one yaw per view")
    camera = CameraConfig(
        n_views=n_views,
        in_channels=int(cam["in_channels"]),
        channels=int(cam["channels"]),
        img_h=int(cam["img_h"]),
        img_w=int(cam["img_w"]),
        depth_bins=int(cam["depth_bins"]),
        d_min=float(cam["d_min"]),
        d_max=float(cam["d_max"]),
        fov=math.radians(float(cam["fov_deg"])),
        yaws=yaws,
        positions=tuple((0.0, 0.0) for _ in range(n_views)),
    )
    g = doc["grid"]
    v = doc["voxel"]
    f = doc["fusion"]
    i = doc["intensity"]
    w = doc["weights"]
    return RunConfig(
        seed=int(doc["seed"]),
        steps=int(doc["steps"]),
        lr=float(doc["lr"]),
        precision=str(doc["precision"]),
        grid=BevGridSpec(
            x_min=float(g["x_min"]),
            x_max=float(g["x_max"]),
            y_min=float(g["y_min"]),
            y_max=float(g["y_max"]),
            rows=int(g["rows"]),
            cols=int(g["cols"]),
        ),
        voxel=VoxelSpec(
            size_x=float(v["size_x"]),
            size_y=float(v["size_y"]),
            size_z=float(v["size_z"]),
            z_min=float(v["z_min"]),
            z_max=float(v["z_max"]),
        ),
        camera=camera,
        fusion=FusionConfig(
            points=int(f["points"]),
            offset_scale=float(f["offset_scale"]),
            residual=bool(f["residual"]),
        ),
        coeffs=IntensityCoeffs(
            alpha_rcs=float(i["alpha_rcs"]), beta_vel=float(i["beta_vel"])
        ),
        rcs_range=(float(i["rcs_min"]), float(i["rcs_max"])),
        weights=LossWeights(
            l1=float(w["l1"]),
            l2=float(w["l2"]),
            l3=float(w["l3"]),
            l4=float(w["l4"]),
            l5=float(w["l5"]),
            l6=float(w["l6"]),
            alpha_igfm=float(w["alpha_igfm"]),
            lambda_blend=float(w["lambda_blend"]),
        ),
        n_objects=int(doc["n_objects"]),
        n_classes=int(doc["n_classes"]),
    )


def default_config() -> RunConfig:
    return _build(default_config_dict())


def load_config(path) -> RunConfig:
    """Parse a JSON config; unknown keys raise, missing keys use defaults."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValueError("config root must be a JSON object")
    merged = _merge(default_config_dict(), doc, "")
    return _build(merged)
