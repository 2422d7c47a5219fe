"""Total objective assembly, the parameter update rule, and the
finite-difference gradient oracle used to certify every backward pass."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .tensor import ParamStore, Tensor, precision

COMPONENT_NAMES = ("det", "depth", "igfm", "swfd", "swrd", "ld")


@dataclass(frozen=True)
class LossWeights:
    """Scalar weights for the six objective terms.

    ``l3`` is the initialization of the learnable third weight; the live
    value is a parameter tensor passed to ``total_loss`` separately.
    ``lambda_blend`` likewise seeds the learnable blend scale.
    """

    l1: float = 0.3
    l2: float = 0.3
    l3: float = 100.0
    l4: float = 0.3
    l5: float = 0.3
    l6: float = 0.3
    alpha_igfm: float = 0.5
    lambda_blend: float = 1.0

    def __post_init__(self):
        for name in ("l1", "l2", "l3", "l4", "l5", "l6"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.alpha_igfm <= 1.0:
            raise ValueError("alpha_igfm must lie in [0, 1]")


@dataclass
class LossBreakdown:
    det: float
    depth: float
    igfm: float
    swfd: float
    swrd: float
    ld: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {
            "det": self.det,
            "depth": self.depth,
            "igfm": self.igfm,
            "swfd": self.swfd,
            "swrd": self.swrd,
            "ld": self.ld,
            "total": self.total,
        }


def total_loss(
    components: Mapping[str, Tensor],
    weights: LossWeights,
    lambda3: Tensor | None = None,
) -> tuple[Tensor, LossBreakdown]:
    """Weighted sum of the six loss terms.

    ``lambda3``, when given, is the live learnable weight of the radar
    guidance term and stays in the graph; otherwise ``weights.l3`` is used
    as a constant. Negative components violate the loss invariants.
    """
    missing = [n for n in COMPONENT_NAMES if n not in components]
    if missing:
        raise ValueError(f"missing loss components: {missing}")
    for name in COMPONENT_NAMES:
        value = float(components[name].data)
        if value < 0:
            raise ValueError(f"loss component {name!r} is negative: {value}")
    det, depth, igfm, swfd, swrd, ld = (components[n] for n in COMPONENT_NAMES)
    third = lambda3 * igfm if lambda3 is not None else weights.l3 * igfm
    total = (
        weights.l1 * det
        + weights.l2 * depth
        + third
        + weights.l4 * swfd
        + weights.l5 * swrd
        + weights.l6 * ld
    )
    breakdown = LossBreakdown(
        det=float(det.data),
        depth=float(depth.data),
        igfm=float(igfm.data),
        swfd=float(swfd.data),
        swrd=float(swrd.data),
        ld=float(ld.data),
        total=float(total.data),
    )
    return total, breakdown


def train_step(
    params: ParamStore, grads: Mapping[str, np.ndarray], lr: float
) -> ParamStore:
    """Plain gradient descent on trainable entries; frozen entries untouched."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    for name, param in params.items():
        if not param.trainable or name not in grads:
            continue
        g = np.asarray(grads[name], dtype=param.value.data.dtype)
        if g.shape != param.value.data.shape:
            raise ValueError(f"gradient dims {g.shape} mismatch parameter {name!r}")
        param.value.data = np.ascontiguousarray(param.value.data - lr * g)
    return params


def finite_diff_grad(
    f: Callable[[Tensor], float | Tensor], x: Tensor, h: float = 1e-5
) -> Tensor:
    """Central differences per element, evaluated at check precision."""
    if h <= 0:
        raise ValueError("step size must be positive")

    def evaluate(arr: np.ndarray) -> float:
        out = f(Tensor(arr))
        value = out.item() if isinstance(out, Tensor) else float(out)
        if not math.isfinite(value):
            raise FloatingPointError("objective returned a non-finite value")
        return value

    with precision("f64"):
        base = x.data.astype(np.float64)
        grad = np.zeros_like(base)
        flat = base.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            up = evaluate(base)
            flat[i] = saved - h
            down = evaluate(base)
            flat[i] = saved
            gflat[i] = (up - down) / (2.0 * h)
        return Tensor(grad)
