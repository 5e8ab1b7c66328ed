"""Masked-average-pooled prototypes and the cosine-threshold mask predictor.

A prototype is the mask-weighted spatial mean of a support feature map; the
predictor marks query locations whose channel vector clears a cosine
threshold against the prototype. This is the desk-scale stand-in for a
learned decoder, sufficient for comparing masking modes end to end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeMismatchError
from .masking import MaskedFeatures, MaskMode
from .tensor import BinaryMask, FeatureStack, Tensor, _bilinear_2d

ZERO_NORM_EPS = 1e-12


@dataclass(frozen=True)
class Prototype:
    """Per-class channel vector pooled from masked support features."""

    vector: np.ndarray
    mode: MaskMode
    source_layer: int = 0

    def __post_init__(self) -> None:
        vec = np.ascontiguousarray(self.vector, dtype=np.float32)
        if vec.ndim != 1 or vec.size < 1:
            raise ValueError(f"prototype vector must be 1D and nonempty, got shape {vec.shape}")
        if not np.isfinite(vec).all():
            raise ValueError("prototype vector must be finite")
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)

    @property
    def channels(self) -> int:
        return self.vector.size


def map_prototype(masked: MaskedFeatures, maskf: Tensor) -> Prototype:
    """Mask-weighted spatial mean of masked features.

    vector[i] = sum_p masked[i][p] * maskf[p] / sum_p maskf[p]
    """
    if maskf.rank != 2:
        raise ValueError(f"pooling mask must be rank-2, got rank {maskf.rank}")
    if masked.shape[1:] != maskf.shape:
        raise ShapeMismatchError("map_prototype spatial grids", masked.shape[1:], maskf.shape)
    weights = maskf.data.astype(np.float64)
    wsum = weights.sum()
    if wsum <= 0.0:
        raise ValueError("empty support object: pooling mask sums to zero")
    feats = masked.features.data.astype(np.float64)
    vec = (feats * weights[None]).sum(axis=(1, 2)) / wsum
    return Prototype(vec.astype(np.float32), masked.mode, masked.source_layer)


def average_prototypes(protos: Sequence[Prototype]) -> Prototype:
    """Equal-weight mean of K-shot prototypes of the same mode and layer."""
    if not protos:
        raise ValueError("need at least one prototype")
    first = protos[0]
    for p in protos[1:]:
        if p.mode is not first.mode or p.source_layer != first.source_layer:
            raise ValueError("prototypes mix modes or source layers")
        if p.channels != first.channels:
            raise ShapeMismatchError("prototype lengths", (p.channels,), (first.channels,))
    mean = np.mean([p.vector.astype(np.float64) for p in protos], axis=0)
    return Prototype(mean.astype(np.float32), first.mode, first.source_layer)


def cosine_map(prototype: Prototype, query: Tensor) -> Tensor:
    """Per-location cosine similarity against the prototype, zero-norm safe.

    Locations whose query vector (or the prototype itself) has near-zero norm
    get similarity 0.
    """
    if query.rank != 3:
        raise ValueError(f"query must be rank-3, got rank {query.rank}")
    c, h, w = query.shape
    if c != prototype.channels:
        raise ShapeMismatchError("cosine_map channel counts", (prototype.channels,), query.shape)
    proto = prototype.vector.astype(np.float64)
    pnorm = float(np.sqrt((proto * proto).sum()))
    flat = query.data.reshape(c, -1).astype(np.float64)
    qnorms = np.sqrt((flat * flat).sum(axis=0))
    if pnorm < ZERO_NORM_EPS:
        return Tensor._wrap(np.zeros((h, w), dtype=np.float32))
    dots = proto @ flat
    cos = np.where(qnorms < ZERO_NORM_EPS, 0.0, dots / (pnorm * np.maximum(qnorms, ZERO_NORM_EPS)))
    return Tensor._wrap(cos.reshape(h, w).astype(np.float32))


def predict_mask(prototype: Prototype, query: Tensor, threshold: float) -> BinaryMask:
    """Foreground = locations with cosine(prototype, query vector) >= threshold.

    Zero-norm query locations are always background, whatever the threshold.
    """
    c, h, w = query.shape
    if c != prototype.channels:
        raise ShapeMismatchError("predict_mask channel counts", (prototype.channels,), query.shape)
    cos = cosine_map(prototype, query).data
    flat = query.data.reshape(c, -1).astype(np.float64)
    valid = (np.sqrt((flat * flat).sum(axis=0)) >= ZERO_NORM_EPS).reshape(h, w)
    proto = prototype.vector.astype(np.float64)
    if float(np.sqrt((proto * proto).sum())) < ZERO_NORM_EPS:
        valid = np.zeros((h, w), dtype=bool)
    pred = (cos >= threshold) & valid
    return BinaryMask(pred.astype(np.uint8))


def upsample_prediction(pred: BinaryMask, out_h: int, out_w: int) -> BinaryMask:
    """Bilinear-resize the float cast of a prediction, then threshold at 0.5.

    Values exactly at 0.5 round up to foreground.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output extents must be >= 1, got ({out_h}, {out_w})")
    field = _bilinear_2d(pred.data.astype(np.float64), out_h, out_w)
    return BinaryMask((field >= 0.5).astype(np.uint8))


def predict_mask_multilayer(
    prototypes: Sequence[Prototype],
    query_stack: FeatureStack,
    threshold: float,
    fuse_layers: bool = False,
) -> BinaryMask:
    """Predict from per-layer prototypes over a query feature stack.

    By default only the deepest layer (highest layer id) is used. With
    ``fuse_layers`` the per-layer cosine maps are resized to the deepest
    layer's grid, averaged, and then thresholded.
    """
    if not prototypes or len(query_stack) == 0:
        raise ValueError("need at least one prototype and one query layer")
    by_layer = {p.source_layer: p for p in prototypes}
    if set(by_layer) != set(query_stack.layer_ids):
        raise ValueError(
            f"prototype layers {sorted(by_layer)} do not match query layers {query_stack.layer_ids}"
        )
    deepest_id, deepest_feat = query_stack[len(query_stack) - 1]
    if not fuse_layers:
        return predict_mask(by_layer[deepest_id], deepest_feat, threshold)
    _, out_h, out_w = deepest_feat.shape
    acc = np.zeros((out_h, out_w), dtype=np.float64)
    for layer_id, feat in query_stack:
        cos = cosine_map(by_layer[layer_id], feat).data.astype(np.float64)
        if cos.shape != (out_h, out_w):
            cos = _bilinear_2d(cos, out_h, out_w)
        acc += cos
    fused = acc / len(query_stack)
    return BinaryMask((fused >= threshold).astype(np.uint8))
