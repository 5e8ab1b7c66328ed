"""Dense float tensors, binary masks, and the shared elementwise kernels.

Values are 32-bit floats (tensors) or 8-bit {0,1} (masks), row-major and
immutable after construction. All operations are pure functions.
"""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from .errors import ShapeMismatchError

MAX_RANK = 4


class Tensor:
    """Immutable dense array of float32 values with rank 1 to 4.

    Construction copies the input and validates that every extent is >= 1
    and every value is finite.
    """

    __slots__ = ("_data",)

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=np.float32, order="C")
        _check_tensor(arr)
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # Internal fast path for freshly computed float32 C-contiguous arrays;
        # still enforces the value invariants.
        _check_tensor(arr)
        t = object.__new__(cls)
        arr.flags.writeable = False
        t._data = arr
        return t

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def rank(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def _check_tensor(arr: np.ndarray) -> None:
    if arr.dtype != np.float32 or not arr.flags.c_contiguous:
        raise ValueError("tensor storage must be C-contiguous float32")
    if arr.ndim < 1 or arr.ndim > MAX_RANK:
        raise ValueError(f"tensor rank must be 1..{MAX_RANK}, got {arr.ndim}")
    if min(arr.shape) < 1:
        raise ValueError(f"all extents must be >= 1, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("tensor values must be finite")


class BinaryMask:
    """Immutable 2D grid of {0,1} bytes."""

    __slots__ = ("_data",)

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=np.uint8, order="C")
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2D, got rank {arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"mask extents must be >= 1, got shape {arr.shape}")
        if arr.max() > 1:
            raise ValueError("mask values must be exactly 0 or 1")
        arr.flags.writeable = False
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    def foreground_pixels(self) -> int:
        return int(self._data.sum())

    def __repr__(self) -> str:
        return f"BinaryMask({self.height}x{self.width}, fg={self.foreground_pixels()})"


class FeatureStack:
    """Ordered per-layer feature maps from one backbone pass.

    Layers are (layer_id, Tensor) pairs with strictly increasing ids and
    rank-3 tensors (channels, height, width). May be empty.
    """

    __slots__ = ("_layers",)

    def __init__(self, layers: Sequence[tuple[int, Tensor]]) -> None:
        layers = tuple((int(i), t) for i, t in layers)
        for i, t in layers:
            if not isinstance(t, Tensor) or t.rank != 3:
                raise ValueError(f"layer {i}: stack entries must be rank-3 tensors")
        ids = [i for i, _ in layers]
        if any(a >= b for a, b in zip(ids, ids[1:])):
            raise ValueError(f"layer ids must be strictly increasing, got {ids}")
        self._layers = layers

    @property
    def layers(self) -> tuple[tuple[int, Tensor], ...]:
        return self._layers

    @property
    def layer_ids(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self._layers)

    def __len__(self) -> int:
        return len(self._layers)

    def __iter__(self) -> Iterator[tuple[int, Tensor]]:
        return iter(self._layers)

    def __getitem__(self, idx: int) -> tuple[int, Tensor]:
        return self._layers[idx]

    def __repr__(self) -> str:
        shapes = {i: t.shape for i, t in self._layers}
        return f"FeatureStack({shapes})"


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two tensors of identical shape."""
    if a.shape != b.shape:
        raise ShapeMismatchError("hadamard", a.shape, b.shape)
    return Tensor._wrap(a.data * b.data)


def _bilinear_2d(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a 2D float64 array to (out_h, out_w).

    Source coordinates use half-pixel centers, (i + 0.5) * in/out - 0.5,
    clamped to the border (no corner alignment). Returns float64.
    """
    in_h, in_w = src.shape
    sy = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0.0, in_h - 1.0)
    sx = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1.0 - fy) + bot * fy

def resize_bilinear(mask: BinaryMask, out_h: int, out_w: int) -> Tensor:
    """Resize a binary mask to (out_h, out_w) as a float tensor in [0, 1].

    Fractional values at object boundaries are kept; no re-binarization.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output extents must be >= 1, got ({out_h}, {out_w})")
    out = _bilinear_2d(mask.data.astype(np.float64), out_h, out_w)
    return Tensor._wrap(out.astype(np.float32))


def broadcast_mask(maskf: Tensor, channels: int) -> Tensor:
    """Replicate a rank-2 mask tensor across `channels` identical slices."""
    if maskf.rank != 2:
        raise ValueError(f"broadcast_mask expects a rank-2 tensor, got rank {maskf.rank}")
    if channels < 1:
        raise ValueError(f"channel count must be >= 1, got {channels}")
    out = np.ascontiguousarray(np.broadcast_to(maskf.data, (channels,) + maskf.shape))
    return Tensor._wrap(out)
