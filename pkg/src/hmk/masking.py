"""The three support-masking kernels: input, feature, and hybrid masking.

Feature masking zeroes support activations outside the (resized) support
mask. Input masking zeroes background pixels of the support image itself.
Hybrid masking keeps feature-masked values wherever they are nonzero and
back-fills the zeroed positions from the input-masked features, recovering
fine spatial detail that feature masking discards.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

from .errors import ShapeMismatchError
from .tensor import BinaryMask, FeatureStack, Tensor, broadcast_mask, hadamard, resize_bilinear


class MaskMode(Enum):
    FM = "fm"
    IM = "im"
    HM = "hm"


@dataclass(frozen=True)
class MaskedFeatures:
    """Rank-3 feature map tagged with the masking mode that produced it.

    The mode tag is enforced by :func:`hybrid_mask` so two feature-masked
    tensors cannot be hybridized by accident.
    """

    features: Tensor
    mode: MaskMode
    source_layer: int = 0

    def __post_init__(self) -> None:
        if self.features.rank != 3:
            raise ValueError(f"masked features must be rank-3, got rank {self.features.rank}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.features.shape


def feature_mask(feat: Tensor, mask: BinaryMask, source_layer: int = 0) -> MaskedFeatures:
    """Multiply features by the support mask resized to the feature grid.

    Elementwise equal to hadamard(feat, broadcast_mask(resize_bilinear(mask,
    h, w), c)), computed without materializing the broadcast. Fractional
    resized-mask values scale boundary features instead of binarizing them.
    """
    if feat.rank != 3:
        raise ValueError(f"feature_mask expects rank-3 features, got rank {feat.rank}")
    _, h, w = feat.shape
    maskf = resize_bilinear(mask, h, w)
    out = feat.data * maskf.data[None, :, :]
    return MaskedFeatures(Tensor._wrap(out), MaskMode.FM, source_layer)


def im_features(feat: Tensor, source_layer: int = 0) -> MaskedFeatures:
    """Tag features extracted from an input-masked (background-zeroed) image.

    The backbone pass itself happens elsewhere; this library only consumes
    its output.
    """
    if feat.rank != 3:
        raise ValueError(f"im_features expects rank-3 features, got rank {feat.rank}")
    return MaskedFeatures(feat, MaskMode.IM, source_layer)


def input_mask(image: Tensor, mask: BinaryMask) -> Tensor:
    """Zero the background pixels of a 3-channel image.

    The mask is resized to the image size first, so boundary pixels blend
    fractionally when the sizes differ.
    """
    if image.rank != 3 or image.shape[0] != 3:
        raise ValueError(f"input_mask expects a (3, h, w) image, got shape {image.shape}")
    _, h, w = image.shape
    maskf = resize_bilinear(mask, h, w)
    return hadamard(image, broadcast_mask(maskf, 3))


@njit(cache=True)
def _hybrid_fill(fm: np.ndarray, im: np.ndarray, tol: float) -> np.ndarray:
    out = np.empty(fm.shape, dtype=fm.dtype)
    f = fm.ravel()
    g = im.ravel()
    o = out.ravel()
    for i in range(f.size):
        v = f[i]
        if abs(v) > tol:
            o[i] = v
        else:
            o[i] = g[i]
    return out


def hybrid_mask(fm: MaskedFeatures, im: MaskedFeatures, zero_tol: float = 0.0) -> MaskedFeatures:
    """Back-fill zero-valued feature-masked entries from input-masked ones.

    At every channel and spatial position the output takes the FM value when
    its magnitude exceeds ``zero_tol`` and the IM value otherwise, so FM
    information always wins where it exists.
    """
    if fm.mode is not MaskMode.FM:
        raise ValueError(f"first argument must have mode FM, got {fm.mode.name}")
    if im.mode is not MaskMode.IM:
        raise ValueError(f"second argument must have mode IM, got {im.mode.name}")
    if fm.shape != im.shape:
        raise ShapeMismatchError("hybrid_mask", fm.shape, im.shape)
    if fm.source_layer != im.source_layer:
        raise ValueError(
            f"source layers differ: {fm.source_layer} vs {im.source_layer}"
        )
    out = _hybrid_fill(fm.features.data, im.features.data, float(zero_tol))
    return MaskedFeatures(Tensor._wrap(out), MaskMode.HM, fm.source_layer)


def hybrid_mask_stack(fms: FeatureStack, ims: FeatureStack, zero_tol: float = 0.0) -> FeatureStack:
    """Layerwise hybrid masking over two aligned feature stacks.

    The first stack is treated as feature-masked, the second as input-masked.
    Layer ids and per-layer shapes must match; ordering is preserved.
    """
    if fms.layer_ids != ims.layer_ids:
        raise ValueError(f"layer ids differ: {fms.layer_ids} vs {ims.layer_ids}")
    out = []
    for (layer_id, f), (_, g) in zip(fms, ims):
        hm = hybrid_mask(
            MaskedFeatures(f, MaskMode.FM, layer_id),
            MaskedFeatures(g, MaskMode.IM, layer_id),
            zero_tol,
        )
        out.append((layer_id, hm.features))
    return FeatureStack(out)
