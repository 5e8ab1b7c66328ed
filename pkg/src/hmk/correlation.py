"""Cosine-similarity correlation volumes between query and support features.

Each (query location, support location) pair gets the ReLU-clamped cosine
similarity of its channel vectors, laid out as a rank-4 tensor indexed
(q_h, q_w, s_h, s_w). Per-layer volumes are grouped by spatial size into a
pyramid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .tensor import FeatureStack, Tensor

ZERO_NORM_EPS = 1e-12
RANGE_SLACK = 1e-6


@dataclass(frozen=True)
class CorrelationTensor:
    """Rank-4 volume of clamped cosine similarities in [0, 1].

    Axis order is fixed as (q_h, q_w, s_h, s_w).
    """

    data: Tensor
    query_shape: tuple[int, int]
    support_shape: tuple[int, int]

    def __post_init__(self) -> None:
        expect = tuple(self.query_shape) + tuple(self.support_shape)
        if self.data.rank != 4 or self.data.shape != expect:
            raise ValueError(
                f"correlation shape {self.data.shape} does not match "
                f"query {self.query_shape} x support {self.support_shape}"
            )
        lo = float(self.data.data.min())
        hi = float(self.data.data.max())
        if lo < 0.0 or hi > 1.0 + RANGE_SLACK:
            raise ValueError(f"correlation values outside [0, 1]: min {lo}, max {hi}")


def _unit_location_vectors(feat: Tensor) -> np.ndarray:
    """Flatten (c, h, w) to unit-norm per-location columns (c, h*w) in float64.

    Locations with norm below ZERO_NORM_EPS become zero vectors, which makes
    their similarity 0 against everything.
    """
    c = feat.shape[0]
    flat = feat.data.reshape(c, -1).astype(np.float64)
    norms = np.sqrt((flat * flat).sum(axis=0))
    inv = np.where(norms < ZERO_NORM_EPS, 0.0, 1.0 / np.maximum(norms, ZERO_NORM_EPS))
    return flat * inv


def cosine_correlation(query: Tensor, support: Tensor) -> CorrelationTensor:
    """Clamped cosine similarity between all query/support location pairs."""
    if query.rank != 3 or support.rank != 3:
        raise ValueError("cosine_correlation expects rank-3 (c, h, w) tensors")
    if query.shape[0] != support.shape[0]:
        raise ShapeMismatchError("cosine_correlation channel counts", query.shape, support.shape)
    q = _unit_location_vectors(query)
    s = _unit_location_vectors(support)
    sim = np.maximum(q.T @ s, 0.0)
    _, qh, qw = query.shape
    _, sh, sw = support.shape
    data = Tensor._wrap(sim.reshape(qh, qw, sh, sw).astype(np.float32))
    return CorrelationTensor(data, (qh, qw), (sh, sw))


@dataclass(frozen=True)
class HypercorrelationPyramid:
    """Correlation volumes grouped by support spatial size, largest first."""

    groups: tuple[tuple[tuple[int, int], tuple[CorrelationTensor, ...]], ...]

    def __post_init__(self) -> None:
        sizes = [size for size, _ in self.groups]
        areas = [h * w for h, w in sizes]
        if any(a < b for a, b in zip(areas, areas[1:])):
            raise ValueError(f"groups must be ordered by decreasing spatial size, got {sizes}")
        for size, tensors in self.groups:
            if not tensors:
                raise ValueError(f"group {size} is empty")
            qshape = tensors[0].query_shape
            for t in tensors:
                if t.support_shape != tuple(size) or t.query_shape != qshape:
                    raise ValueError(f"group {size} mixes spatial shapes")

    @property
    def group_sizes(self) -> tuple[tuple[int, int], ...]:
        return tuple(size for size, _ in self.groups)


def build_hypercorrelation(
    query_stack: FeatureStack, support_stack: FeatureStack
) -> HypercorrelationPyramid:
    """One correlation volume per layer, grouped by support spatial size."""
    if query_stack.layer_ids != support_stack.layer_ids:
        raise ValueError(
            f"layer ids differ: {query_stack.layer_ids} vs {support_stack.layer_ids}"
        )
    by_size: dict[tuple[int, int], list[CorrelationTensor]] = {}
    for (_, q), (_, s) in zip(query_stack, support_stack):
        corr = cosine_correlation(q, s)
        by_size.setdefault(corr.support_shape, []).append(corr)
    ordered = sorted(by_size.items(), key=lambda kv: (-kv[0][0] * kv[0][1], -kv[0][0], -kv[0][1]))
    return HypercorrelationPyramid(tuple((size, tuple(ts)) for size, ts in ordered))
