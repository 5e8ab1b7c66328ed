"""Segmentation metrics: per-class IoU, fold mIoU, and FB-IoU.

Counts are exact 64-bit integers accumulated across episodes, so shards
evaluated in parallel can be merged associatively without drift. Per-class
IoU divides the class-accumulated intersection by the class-accumulated
union (not a mean of per-episode IoUs), matching the usual fold protocol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ShapeMismatchError
from .tensor import BinaryMask


@dataclass
class MetricAccumulator:
    """Mergeable intersection/union sums, per class and class-agnostic."""

    per_class: dict[int, tuple[int, int]] = field(default_factory=dict)
    fg_inter: int = 0
    fg_union: int = 0
    bg_inter: int = 0
    bg_union: int = 0
    episode_count: int = 0


def accumulate(
    acc: MetricAccumulator, class_id: int, pred: BinaryMask, gt: BinaryMask
) -> MetricAccumulator:
    """Add one episode's pixel counts to the accumulator (mutates and returns it)."""
    if pred.shape != gt.shape:
        raise ShapeMismatchError("accumulate masks", pred.shape, gt.shape)
    p = pred.data.astype(bool)
    g = gt.data.astype(bool)
    inter = int((p & g).sum())
    union = int((p | g).sum())
    ci, cu = acc.per_class.get(class_id, (0, 0))
    acc.per_class[class_id] = (ci + inter, cu + union)
    acc.fg_inter += inter
    acc.fg_union += union
    acc.bg_inter += int((~p & ~g).sum())
    acc.bg_union += int((~p | ~g).sum())
    acc.episode_count += 1
    return acc


def per_class_iou(acc: MetricAccumulator) -> dict[int, float]:
    """Class-accumulated IoU for every class with a nonzero union."""
    return {
        cid: inter / union
        for cid, (inter, union) in sorted(acc.per_class.items())
        if union > 0
    }


def miou(acc: MetricAccumulator) -> float:
    """Mean of class-accumulated IoUs over the accumulated classes."""
    ious = per_class_iou(acc)
    if not ious:
        raise ValueError("mIoU needs at least one class with a nonzero union")
    return sum(ious.values()) / len(ious)


def fb_iou(acc: MetricAccumulator) -> float:
    """Mean of class-agnostic foreground IoU and background IoU."""
    if acc.fg_union == 0 or acc.bg_union == 0:
        raise ValueError("FB-IoU needs nonzero foreground and background unions")
    return (acc.fg_inter / acc.fg_union + acc.bg_inter / acc.bg_union) / 2.0


def merge(a: MetricAccumulator, b: MetricAccumulator) -> MetricAccumulator:
    """Fieldwise sum of two accumulators; associative and commutative."""
    per_class = dict(a.per_class)
    for cid, (bi, bu) in b.per_class.items():
        ai, au = per_class.get(cid, (0, 0))
        per_class[cid] = (ai + bi, au + bu)
    return MetricAccumulator(
        per_class=per_class,
        fg_inter=a.fg_inter + b.fg_inter,
        fg_union=a.fg_union + b.fg_union,
        bg_inter=a.bg_inter + b.bg_inter,
        bg_union=a.bg_union + b.bg_union,
        episode_count=a.episode_count + b.episode_count,
    )
