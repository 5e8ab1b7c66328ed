"""Episode evaluation: run a predictor over a manifest and report metrics.

Prototype predictors pool the mode-masked support features with uniform
spatial weights, so the masking mode is the only varying factor between
prototype-fm, prototype-im, and prototype-hm. For feature-masked inputs the
uniform mean points in the same direction as the classic mask-weighted
average (the mask is already multiplied in), and it stays well defined when
a small object vanishes entirely from the resized mask.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arrayio import read_array_file, read_mask_file
from .episodes import Episode, EpisodeManifest
from .errors import ManifestError
from .masking import MaskMode, feature_mask, hybrid_mask, im_features
from .metrics import MetricAccumulator, accumulate, fb_iou, merge, miou, per_class_iou
from .prototype import (
    Prototype,
    average_prototypes,
    map_prototype,
    predict_mask_multilayer,
    upsample_prediction,
)
from .tensor import BinaryMask, FeatureStack, Tensor

PREDICTORS = ("gt", "prototype-fm", "prototype-im", "prototype-hm")


@dataclass(frozen=True)
class EvalOptions:
    predictor: str
    thresholds: tuple[float, ...] = (0.7,)
    fuse_layers: bool = False
    zero_tol: float = 0.0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.predictor not in PREDICTORS:
            raise ValueError(f"unknown predictor {self.predictor!r}, expected one of {PREDICTORS}")
        if not self.thresholds:
            raise ValueError("need at least one threshold")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class EvalReport:
    report: dict
    best_predictions: list[BinaryMask] = field(default_factory=list)


def default_workers() -> int:
    env = os.environ.get("HMK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"HMK_THREADS must be an integer, got {env!r}") from None
    return 1


def sweep_thresholds(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Inclusive threshold grid, rounded to avoid float drift in labels."""
    if step <= 0 or stop < start:
        raise ValueError(f"bad sweep range {start}:{stop}:{step}")
    n = int(round((stop - start) / step))
    ts = [round(start + i * step, 10) for i in range(n + 1)]
    return tuple(t for t in ts if t <= stop + 1e-9)


def _load_stack(base: Path, paths: tuple[str, ...], where: str) -> FeatureStack:
    layers = []
    for layer_id, rel in enumerate(paths):
        path = base / rel
        if not path.exists():
            raise ManifestError(f"{where}: missing file {rel}")
        layers.append((layer_id, read_array_file(path)))
    return FeatureStack(layers)


def _load_mask(base: Path, rel: str, where: str) -> BinaryMask:
    path = base / rel
    if not path.exists():
        raise ManifestError(f"{where}: missing file {rel}")
    return read_mask_file(path)


def _support_prototypes(
    base: Path, episode: Episode, where: str, mode: MaskMode, zero_tol: float
) -> list[Prototype]:
    """One prototype per layer, averaged over the K supports."""
    per_layer: dict[int, list[Prototype]] = {}
    for item in episode.supports:
        raw = _load_stack(base, item.features, where)
        mask = _load_mask(base, item.mask, where)
        if mask.foreground_pixels() == 0:
            raise ManifestError(f"{where}: support mask {item.mask} has no foreground")
        im_stack = None
        if mode in (MaskMode.IM, MaskMode.HM):
            im_stack = _load_stack(base, item.im_features, where)
        for idx, (layer_id, feat) in enumerate(raw):
            if mode is MaskMode.FM:
                masked = feature_mask(feat, mask, layer_id)
            elif mode is MaskMode.IM:
                masked = im_features(im_stack[idx][1], layer_id)
            else:
                fm = feature_mask(feat, mask, layer_id)
                im = im_features(im_stack[idx][1], layer_id)
                masked = hybrid_mask(fm, im, zero_tol)
            ones = Tensor(np.ones(feat.shape[1:], dtype=np.float32))
            per_layer.setdefault(layer_id, []).append(map_prototype(masked, ones))
    return [average_prototypes(ps) for _, ps in sorted(per_layer.items())]


def _evaluate_episode(
    base: Path, index: int, episode: Episode, options: EvalOptions
) -> tuple[int, BinaryMask, list[BinaryMask]]:
    """Returns (class_id, gt mask, one prediction per threshold)."""
    where = f"episode {index}"
    gt = _load_mask(base, episode.query.mask, where)
    if options.predictor == "gt":
        return episode.class_id, gt, [gt for _ in options.thresholds]
    mode = {
        "prototype-fm": MaskMode.FM,
        "prototype-im": MaskMode.IM,
        "prototype-hm": MaskMode.HM,
    }[options.predictor]
    protos = _support_prototypes(base, episode, where, mode, options.zero_tol)
    query_stack = _load_stack(base, episode.query.features, where)
    preds = []
    for t in options.thresholds:
        low = predict_mask_multilayer(protos, query_stack, t, options.fuse_layers)
        preds.append(upsample_prediction(low, gt.height, gt.width))
    return episode.class_id, gt, preds


def _evaluate_shard(
    base: Path, indexed: list[tuple[int, Episode]], options: EvalOptions, keep_preds: bool
) -> tuple[list[MetricAccumulator], list[list[BinaryMask]]]:
    accs = [MetricAccumulator() for _ in options.thresholds]
    preds_by_episode: list[list[BinaryMask]] = []
    for index, episode in indexed:
        cid, gt, preds = _evaluate_episode(base, index, episode, options)
        for acc, pred in zip(accs, preds):
            accumulate(acc, cid, pred, gt)
        if keep_preds:
            preds_by_episode.append(preds)
    return accs, preds_by_episode


def evaluate_manifest(
    manifest: EpisodeManifest,
    base_dir: str | Path,
    options: EvalOptions,
    keep_predictions: bool = False,
) -> EvalReport:
    """Run the predictor over every episode and build the metrics report.

    Episodes are sharded across worker threads (each with its own
    accumulator) and the shard accumulators are merged in order, so the
    report does not depend on thread scheduling.
    """
    base = Path(base_dir)
    indexed = list(enumerate(manifest.episodes))
    workers = min(options.workers, len(indexed))
    if workers <= 1:
        accs, shard_preds = _evaluate_shard(base, indexed, options, keep_predictions)
        all_preds = shard_preds
    else:
        bounds = np.linspace(0, len(indexed), workers + 1).astype(int)
        shards = [indexed[a:b] for a, b in zip(bounds, bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(lambda sh: _evaluate_shard(base, sh, options, keep_predictions), shards)
            )
        accs = [MetricAccumulator() for _ in options.thresholds]
        all_preds = []
        for shard_accs, shard_preds in results:
            accs = [merge(a, b) for a, b in zip(accs, shard_accs)]
            all_preds.extend(shard_preds)

    sweep = [
        {"threshold": t, "miou": miou(acc), "fb_iou": fb_iou(acc)}
        for t, acc in zip(options.thresholds, accs)
    ]
    best_idx = max(range(len(sweep)), key=lambda i: (sweep[i]["miou"], -i))
    best = accs[best_idx]
    report = {
        "per_class_iou": {str(cid): iou for cid, iou in per_class_iou(best).items()},
        "miou": miou(best),
        "fb_iou": fb_iou(best),
        "episodes": best.episode_count,
        "shots": manifest.shots,
        "fold": manifest.fold,
        "predictor": options.predictor,
        "threshold": options.thresholds[best_idx],
    }
    if len(options.thresholds) > 1:
        report["sweep"] = sweep
    best_preds = [preds[best_idx] for preds in all_preds] if keep_predictions else []
    return EvalReport(report=report, best_predictions=best_preds)
