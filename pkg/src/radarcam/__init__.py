"""Camera-radar BEV fusion with intensity-guided distillation, desk scale."""

from .tensor import (
    Tensor,
    ParamStore,
    NonFiniteError,
    precision,
    set_precision,
    get_precision,
)
from .grids import BevGridSpec, VoxelSpec
from .config import RunConfig, default_config, load_config
from .pipeline import FusionModel
from .scene import SceneConfig, SceneSample, generate_scene

__all__ = [
    "Tensor",
    "ParamStore",
    "NonFiniteError",
    "precision",
    "set_precision",
    "get_precision",
    "BevGridSpec",
    "VoxelSpec",
    "RunConfig",
    "default_config",
    "load_config",
    "FusionModel",
    "SceneConfig",
    "SceneSample",
    "generate_scene",
]

__version__ = "0.1.0"
