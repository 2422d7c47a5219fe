"""Minimal dense tensors with hand-derived reverse-mode gradients.

Values wrap a contiguous numpy array and are treated as immutable once
produced, so they can be shared read-only across threads. An operation
that participates in training attaches a closure computing the
vector-Jacobian product for each input; ``backward()`` on a scalar result
replays those closures in reverse topological order. The operation set is
deliberately closed -- this is not a general autodiff engine.

A global precision switch selects float32 for pipeline runs and float64
for oracle and gradient suites.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Param",
    "ParamStore",
    "NonFiniteError",
    "set_precision",
    "get_precision",
    "precision",
    "compose",
    "softmax",
    "sigmoid",
    "relu",
    "affine",
    "conv2d",
    "channel_max_pool",
    "bilinear_sample",
    "bilinear_sample_many",
    "outer_scale",
    "clamp",
    "safe_log",
    "absolute",
    "stack",
    "sum_axis",
    "transpose",
    "reshape",
    "MAGIC",
    "save_tensor",
    "load_tensor",
]


class NonFiniteError(FloatingPointError):
    """Raised when a tensor would hold NaN or Inf."""


_DTYPES = {"f32": np.float32, "f64": np.float64}
_default_dtype = np.float32


def set_precision(name: str) -> None:
    """Select the dtype new tensors are created with: "f32" or "f64"."""
    global _default_dtype
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}; expected 'f32' or 'f64'")
    _default_dtype = _DTYPES[name]


def get_precision() -> str:
    return "f32" if _default_dtype is np.float32 else "f64"


class precision:
    """Context manager pinning the global precision for a block."""

    def __init__(self, name: str):
        if name not in _DTYPES:
            raise ValueError(f"unknown precision {name!r}")
        self._name = name
        self._saved = get_precision()

    def __enter__(self) -> "precision":
        self._saved = get_precision()
        set_precision(self._name)
        return self

    def __exit__(self, *exc) -> bool:
        set_precision(self._saved)
        return False


class Tensor:
    """Dense row-major real array with an optional gradient slot.

    ``data`` is always float32 or float64 and C-contiguous. ``grad``, when
    populated by ``backward()``, has the same dims as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype: str | None = None):
        """``dtype=None`` casts to the global precision; ``dtype="keep"``
        preserves an existing float32/float64 array (graph internals,
        dump loading)."""
        if isinstance(data, Tensor):
            data = data.data
        if dtype == "keep" and isinstance(data, np.ndarray) and data.dtype in (
            np.float32,
            np.float64,
        ):
            arr = np.ascontiguousarray(data)
        else:
            arr = np.ascontiguousarray(np.asarray(data, dtype=_default_dtype))
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor holds non-finite values")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar, got dims {self.dims}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same values, severed from the graph (stop-gradient)."""
        return Tensor(self.data, dtype="keep")

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(dims={self.dims}, dtype={self.data.dtype.name}{flag})"

    # -- graph -----------------------------------------------------------

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every ancestor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            grads = node._vjp(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if g.shape != parent.data.shape:
                    raise ValueError(
                        f"gradient dims {g.shape} do not match value dims {parent.data.shape}"
                    )
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad = parent.grad + g

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        return _binary(self, other, np.add, _add_vjp)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        return _binary(self, other, np.subtract, _sub_vjp)

    def __rsub__(self, other) -> "Tensor":
        return _binary(_coerce(other, self), self, np.subtract, _sub_vjp)

    def __mul__(self, other) -> "Tensor":
        return _binary(self, other, np.multiply, _mul_vjp)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return compose(-self.data, (self,), lambda g: (-g,))

    def sum(self) -> "Tensor":
        out = np.asarray(self.data.sum(dtype=self.data.dtype))
        return compose(out, (self,), lambda g: (np.full_like(self.data, g.reshape(())),))

    def mean(self) -> "Tensor":
        n = self.data.size
        out = np.asarray(self.data.sum(dtype=self.data.dtype) / n)
        return compose(out, (self,), lambda g: (np.full_like(self.data, g.reshape(()) / n),))


def _coerce(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype), dtype="keep")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return np.ascontiguousarray(g)


def _add_vjp(a: Tensor, b: Tensor, g: np.ndarray):
    return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)


def _sub_vjp(a: Tensor, b: Tensor, g: np.ndarray):
    return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)


def _mul_vjp(a: Tensor, b: Tensor, g: np.ndarray):
    return (
        _unbroadcast(g * b.data, a.data.shape),
        _unbroadcast(g * a.data, b.data.shape),
    )


def _binary(a: Tensor, b, forward, vjp) -> Tensor:
    bt = _coerce(b, a)
    out = forward(a.data, bt.data)
    return compose(out, (a, bt), lambda g: vjp(a, bt, g))


def compose(
    data: np.ndarray,
    parents: Sequence[Tensor],
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Wrap an op result, recording its inputs and hand-derived VJP."""
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents), dtype="keep")
    if out.requires_grad:
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


# -- primitive operators --------------------------------------------------


def softmax(x: Tensor, axis: int) -> Tensor:
    """Normalized exponentials along ``axis``; slices sum to 1."""
    nd = x.data.ndim
    if not -nd <= axis < nd:
        raise ValueError(f"axis {axis} invalid for dims {x.dims}")
    ax = axis % nd
    if x.data.shape[ax] < 1:
        raise ValueError("softmax axis must have extent >= 1")
    shifted = x.data - x.data.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=ax, keepdims=True)

    def vjp(g: np.ndarray):
        inner = (g * y).sum(axis=ax, keepdims=True)
        return ((g - inner) * y,)

    return compose(y, (x,), vjp)


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise 1 / (1 + exp(-x)), computed overflow-safe."""
    z = np.clip(x.data, -60.0, 60.0)  # past +-60 the value is constant at fp64
    ez = np.exp(-np.abs(z))
    y = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))

    def vjp(g: np.ndarray):
        return (g * y * (1.0 - y),)

    return compose(y, (x,), vjp)


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0)

    def vjp(g: np.ndarray):
        return (g * (x.data > 0),)

    return compose(y, (x,), vjp)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def vjp(g: np.ndarray):
        return (g * (1.0 - y * y),)

    return compose(y, (x,), vjp)


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """y = x @ weight + bias applied to the trailing vector of ``x``."""
    if weight.ndim != 2 or bias.ndim != 1:
        raise ValueError("affine expects a 2-D weight and 1-D bias")
    k_in, k_out = weight.dims
    if x.dims[-1] != k_in or bias.dims[0] != k_out:
        raise ValueError(
            f"affine shape mismatch: x {x.dims}, weight {weight.dims}, bias {bias.dims}"
        )
    y = x.data @ weight.data + bias.data

    def vjp(g: np.ndarray):
        x2 = x.data.reshape(-1, k_in)
        g2 = g.reshape(-1, k_out)
        return (
            np.ascontiguousarray(g @ weight.data.T),
            x2.T @ g2,
            g2.sum(axis=0),
        )

    return compose(y, (x, weight, bias), vjp)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """2-D correlation with same-size zero padding.

    ``x`` is [C_in, H, W] or [N, C_in, H, W]; ``kernel`` is
    [C_out, C_in, kh, kw] with odd kh, kw; output keeps the spatial dims.
    """
    if kernel.ndim != 4:
        raise ValueError("conv2d kernel must be 4-D [C_out, C_in, kh, kw]")
    c_out, c_in, kh, kw = kernel.dims
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    if x.ndim not in (3, 4):
        raise ValueError("conv2d input must be [C,H,W] or [N,C,H,W]")
    if x.dims[-3] != c_in:
        raise ValueError(f"conv2d channel mismatch: input {x.dims[-3]}, kernel {c_in}")
    if bias.dims != (c_out,):
        raise ValueError("conv2d bias must be 1-D of length C_out")
    h, w = x.dims[-2], x.dims[-1]
    ph, pw = kh // 2, kw // 2
    lead = x.dims[:-3]
    pad = [(0, 0)] * (x.ndim - 2) + [(ph, ph), (pw, pw)]
    xp = np.pad(x.data, pad)
    patches = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(-2, -1))
    # [*, C, H, W, kh, kw] -> [(*)HW, C*kh*kw] so the correlation is one GEMM
    pm = np.ascontiguousarray(np.moveaxis(patches, -5, -3)).reshape(-1, c_in * kh * kw)
    km = kernel.data.reshape(c_out, -1)
    y = (pm @ km.T + bias.data).reshape(lead + (h, w, c_out))
    y = np.ascontiguousarray(np.moveaxis(y, -1, -3))

    def vjp(g: np.ndarray):
        gm = np.ascontiguousarray(np.moveaxis(g, -3, -1)).reshape(-1, c_out)
        dk = (gm.T @ pm).reshape(kernel.data.shape)
        db = gm.sum(axis=0)
        dpatch = (gm @ km).reshape(lead + (h, w, c_in, kh, kw))
        dpatch = np.moveaxis(dpatch, -3, -5)  # back to [*, C, H, W, kh, kw]
        dxp = np.zeros_like(xp)
        for a in range(kh):
            for b in range(kw):
                dxp[..., a : a + h, b : b + w] += dpatch[..., a, b]
        return np.ascontiguousarray(dxp[..., ph : ph + h, pw : pw + w]), dk, db

    return compose(y, (x, kernel, bias), vjp)


def channel_max_pool(vectors: Sequence[Tensor], channels: int | None = None) -> Tensor:
    """Elementwise maximum over a collection of equal-length vectors.

    An empty collection pools to the zero vector (requires ``channels``).
    """
    vs = list(vectors)
    if not vs:
        if channels is None:
            raise ValueError("empty pool needs an explicit channel count")
        return Tensor(np.zeros(channels, dtype=_default_dtype))
    c = vs[0].dims
    if len(c) != 1 or any(v.dims != c for v in vs):
        raise ValueError("channel_max_pool requires 1-D vectors of one length")
    stacked = np.stack([v.data for v in vs])
    winners = stacked.argmax(axis=0)
    y = stacked[winners, np.arange(c[0])]

    def vjp(g: np.ndarray):
        outs = []
        for m, v in enumerate(vs):
            gm = np.zeros_like(v.data)
            sel = winners == m
            gm[sel] = g[sel]
            outs.append(gm)
        return tuple(outs)

    return compose(y, tuple(vs), vjp)


def bilinear_sample(fmap: Tensor, u: float, v: float) -> Tensor:
    """Bilinear read of a [C,H,W] map at (u, v); u indexes W, v indexes H.

    Out-of-bounds neighborhoods read zero.
    """
    if fmap.ndim != 3:
        raise ValueError("bilinear_sample expects a [C,H,W] map")
    c, h, w = fmap.dims
    x0, y0 = int(np.floor(u)), int(np.floor(v))
    fx, fy = float(u) - x0, float(v) - y0
    corners = (
        (x0, y0, (1 - fx) * (1 - fy)),
        (x0 + 1, y0, fx * (1 - fy)),
        (x0, y0 + 1, (1 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    )
    y = np.zeros(c, dtype=fmap.data.dtype)
    live = []
    for xi, yi, wgt in corners:
        if 0 <= xi < w and 0 <= yi < h:
            y += wgt * fmap.data[:, yi, xi]
            live.append((xi, yi, wgt))

    def vjp(g: np.ndarray):
        dm = np.zeros_like(fmap.data)
        for xi, yi, wgt in live:
            dm[:, yi, xi] += wgt * g
        return (dm,)

    return compose(y, (fmap,), vjp)


def bilinear_sample_many(fmap: Tensor, coords: Tensor) -> Tensor:
    """Batched bilinear reads: coords [..., 2] of (u, v) -> values [..., C].

    Gradients flow to the map and to the coordinates; out-of-bounds
    neighbors contribute zero.
    """
    if fmap.ndim != 3:
        raise ValueError("bilinear_sample_many expects a [C,H,W] map")
    if coords.dims[-1] != 2:
        raise ValueError("coords must have a trailing extent of 2")
    c, h, w = fmap.dims
    u = coords.data[..., 0]
    v = coords.data[..., 1]
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    fx = u - x0
    fy = v - y0

    def corner(xi, yi):
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        xc = np.clip(xi, 0, w - 1)
        yc = np.clip(yi, 0, h - 1)
        vals = np.moveaxis(fmap.data[:, yc, xc], 0, -1) * valid[..., None]
        return vals, valid, xc, yc

    v00, m00, x00, y00 = corner(x0, y0)
    v01, m01, x01, y01 = corner(x0 + 1, y0)
    v10, m10, x10, y10 = corner(x0, y0 + 1)
    v11, m11, x11, y11 = corner(x0 + 1, y0 + 1)
    w00 = (1 - fx) * (1 - fy)
    w01 = fx * (1 - fy)
    w10 = (1 - fx) * fy
    w11 = fx * fy
    out = (
        w00[..., None] * v00
        + w01[..., None] * v01
        + w10[..., None] * v10
        + w11[..., None] * v11
    )

    def vjp(g: np.ndarray):
        dmap = np.zeros((h * w, c), dtype=fmap.data.dtype)
        for wgt, valid, xc, yc in (
            (w00, m00, x00, y00),
            (w01, m01, x01, y01),
            (w10, m10, x10, y10),
            (w11, m11, x11, y11),
        ):
            contrib = wgt[..., None] * g
            idx = (yc * w + xc)[valid]
            np.add.at(dmap, idx, contrib[valid])
        dmap_t = np.ascontiguousarray(dmap.T.reshape(c, h, w))
        ddu = ((1 - fy)[..., None] * (v01 - v00) + fy[..., None] * (v11 - v10)) * g
        ddv = ((1 - fx)[..., None] * (v10 - v00) + fx[..., None] * (v11 - v01)) * g
        dcoords = np.stack([ddu.sum(axis=-1), ddv.sum(axis=-1)], axis=-1)
        return dmap_t, dcoords.astype(coords.data.dtype)

    return compose(out, (fmap, coords), vjp)


def outer_scale(c: Tensor, p: Tensor) -> Tensor:
    """out[i, d] = c[i] * p[d]."""
    if c.ndim != 1 or p.ndim != 1:
        raise ValueError("outer_scale expects two 1-D tensors")
    y = np.outer(c.data, p.data)

    def vjp(g: np.ndarray):
        return g @ p.data, g.T @ c.data

    return compose(y, (c, p), vjp)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Elementwise clip to [lo, hi]; gradient passes only strictly inside."""
    y = np.clip(x.data, lo, hi)

    def vjp(g: np.ndarray):
        return (g * ((x.data > lo) & (x.data < hi)),)

    return compose(y, (x,), vjp)


def safe_log(x: Tensor, eps: float = 1e-12) -> Tensor:
    """log(max(x, eps)); zero gradient where the floor is active."""
    floored = np.maximum(x.data, eps)
    y = np.log(floored)

    def vjp(g: np.ndarray):
        return (g * (x.data > eps) / floored,)

    return compose(y, (x,), vjp)


def absolute(x: Tensor) -> Tensor:
    y = np.abs(x.data)

    def vjp(g: np.ndarray):
        return (g * np.sign(x.data),)

    return compose(y, (x,), vjp)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = list(tensors)
    if not ts:
        raise ValueError("stack needs at least one tensor")
    if any(t.dims != ts[0].dims for t in ts):
        raise ValueError("stack requires identical dims")
    y = np.stack([t.data for t in ts], axis=axis)

    def vjp(g: np.ndarray):
        return tuple(np.ascontiguousarray(s) for s in np.moveaxis(g, axis, 0))

    return compose(y, tuple(ts), vjp)


def sum_axis(x: Tensor, axis: int, keepdims: bool = True) -> Tensor:
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g: np.ndarray):
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.data.shape).copy(),)

    return compose(y, (x,), vjp)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    y = np.ascontiguousarray(x.data.transpose(axes))

    def vjp(g: np.ndarray):
        return (np.ascontiguousarray(g.transpose(inverse)),)

    return compose(y, (x,), vjp)


def reshape(x: Tensor, dims: Sequence[int]) -> Tensor:
    dims = tuple(dims)
    y = x.data.reshape(dims)

    def vjp(g: np.ndarray):
        return (g.reshape(x.data.shape),)

    return compose(y, (x,), vjp)


# -- parameters ------------------------------------------------------------


class Param:
    """A named store entry: value tensor, gradient slot, trainable flag."""

    __slots__ = ("value", "trainable")

    def __init__(self, value: Tensor, trainable: bool = True):
        self.value = value
        self.trainable = bool(trainable)

    @property
    def gradient(self) -> np.ndarray:
        if self.value.grad is None:
            return np.zeros_like(self.value.data)
        return self.value.grad


class ParamStore:
    """Uniquely named parameter tensors; frozen entries never receive grads."""

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name: str, value, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = bool(trainable)
        self._params[name] = Param(t, trainable)
        return t

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name].value
        except KeyError:
            raise KeyError(f"unknown parameter {name!r}") from None

    def entry(self, name: str) -> Param:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Param]]:
        return iter(self._params.items())

    def trainable_names(self) -> list[str]:
        return [n for n, p in self._params.items() if p.trainable]

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.value.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Gradients of trainable entries populated by the last backward."""
        out = {}
        for name, p in self._params.items():
            if p.trainable and p.value.grad is not None:
                out[name] = p.value.grad
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: p.value.data.copy() for n, p in self._params.items()}


# -- tensor dump format ----------------------------------------------------

MAGIC = b"IMKD"
_DUMP_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_tensor(path, t: Tensor) -> None:
    """Write magic, version, dtype code, dims and row-major payload."""
    arr = np.ascontiguousarray(t.data)
    code = _DTYPE_CODES[arr.dtype]
    head = MAGIC + struct.pack("<III", _DUMP_VERSION, code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.astype(_CODE_DTYPES[code], copy=False).tobytes(order="C")
    Path(path).write_bytes(head + payload)


def load_tensor(path) -> Tensor:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic bytes")
    version, code, ndim = struct.unpack_from("<III", raw, 4)
    if version != _DUMP_VERSION:
        raise ValueError(f"{path}: unsupported dump version {version}")
    if code not in _CODE_DTYPES:
        raise ValueError(f"{path}: unknown dtype code {code}")
    dims = struct.unpack_from(f"<{ndim}I", raw, 16)
    offset = 16 + 4 * ndim
    arr = np.frombuffer(raw, dtype=_CODE_DTYPES[code], offset=offset)
    expected = int(np.prod(dims)) if ndim else 1
    if arr.size != expected:
        raise ValueError(f"{path}: payload holds {arr.size} values, dims say {expected}")
    native = np.float32 if code == 0 else np.float64
    return Tensor(arr.reshape(dims).astype(native), dtype="keep")
