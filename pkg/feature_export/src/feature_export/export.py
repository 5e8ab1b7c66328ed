"""Run a frozen backbone over (image, mask) pairs and export array files.

Per item this writes raw-image layer features, input-masked layer features
(background pixels zeroed before normalization), and the binary mask, plus a
JSON index whose item entries use the episode-manifest schema, so downstream
episode samplers can consume them directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbones import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    build_backbone,
    extract_features,
    stack_depths,
    validate_stages,
)


@dataclass(frozen=True)
class ExportItem:
    image: Path
    mask: Path
    class_id: int = 1

    @property
    def stem(self) -> str:
        return self.image.stem


@dataclass(frozen=True)
class ExportJob:
    items: tuple[ExportItem, ...]
    backbone: str = "resnet50"
    layers: tuple[str, ...] = ("conv3_x", "conv4_x", "conv5_x")
    out_dir: Path = Path("export")
    weights: str = "pretrained"  # "pretrained" | "none" | state-dict path
    per_block: bool = False
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("export job holds no items")
        validate_stages(self.layers)


@dataclass
class ExportResult:
    index_path: Path
    exported: int
    failures: list[tuple[str, str]] = field(default_factory=list)  # (stem, reason)


def _load_image(path: Path) -> np.ndarray:
    """RGB image as float32 (3, h, w) in [0, 1]."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))


def _load_mask(path: Path, height: int, width: int) -> np.ndarray:
    """Binary {0,1} uint8 mask, nearest-neighbor resized to the image size."""
    with Image.open(path) as img:
        gray = img.convert("L")
        if gray.size != (width, height):
            gray = gray.resize((width, height), resample=Image.NEAREST)
        mask = np.asarray(gray, dtype=np.uint8)
    return (mask > 0).astype(np.uint8)


def _normalize(pixels: np.ndarray) -> torch.Tensor:
    mean = np.asarray(IMAGENET_MEAN, dtype=np.float32)[:, None, None]
    std = np.asarray(IMAGENET_STD, dtype=np.float32)[:, None, None]
    return torch.from_numpy((pixels - mean) / std).unsqueeze(0)


def _save_array(path: Path, arr: np.ndarray) -> None:
    np.save(path, np.ascontiguousarray(arr))


def export_features(job: ExportJob) -> ExportResult:
    """Export every item; continue past per-item failures.

    Returns the index path, the export count, and the per-item failures (the
    CLI turns a nonempty failure list into a nonzero exit).
    """
    if job.deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)
    model = build_backbone(job.backbone, job.weights, job.seed)
    layer_table = stack_depths(job.backbone, job.layers, job.per_block)
    layer_keys = [info.key for info in layer_table]

    out = Path(job.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    failures: list[tuple[str, str]] = []
    for item in job.items:
        try:
            entries.append(_export_one(job, model, layer_keys, out, item))
        except Exception as exc:  # noqa: BLE001 - job continues per item
            failures.append((item.stem, str(exc)))

    index = {
        "dataset": "export",
        "backbone": job.backbone,
        "layers": layer_keys,
        "weights": job.weights,
        "normalization": {"mean": list(IMAGENET_MEAN), "std": list(IMAGENET_STD)},
        "stack_depths": {
            info.key: {"channels": info.channels, "stride": info.stride} for info in layer_table
        },
        "items": entries,
        "failures": [{"item": stem, "reason": reason} for stem, reason in failures],
    }
    index_path = out / "export_index.json"
    index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return ExportResult(index_path=index_path, exported=len(entries), failures=failures)


def _export_one(
    job: ExportJob,
    model: torch.nn.Module,
    layer_keys: list[str],
    out: Path,
    item: ExportItem,
) -> dict:
    pixels = _load_image(item.image)
    _, h, w = pixels.shape
    mask = _load_mask(item.mask, h, w)
    if not mask.any():
        raise ValueError(f"{item.mask.name}: empty support object (all-zero mask)")

    # background zeroed on raw pixels, then both paths share normalization
    masked_pixels = pixels * mask[None].astype(np.float32)
    raw_feats = extract_features(model, _normalize(pixels), job.layers, job.per_block)
    im_feats = extract_features(model, _normalize(masked_pixels), job.layers, job.per_block)

    feature_paths, im_paths = [], []
    for i, key in enumerate(layer_keys):
        fpath = f"{item.stem}.f{i}.npy"
        ipath = f"{item.stem}.i{i}.npy"
        _save_array(out / fpath, raw_feats[key].numpy())
        _save_array(out / ipath, im_feats[key].numpy())
        feature_paths.append(fpath)
        im_paths.append(ipath)
    mask_path = f"{item.stem}.mask.npy"
    _save_array(out / mask_path, mask)
    return {
        "class_id": item.class_id,
        "features": feature_paths,
        "im_features": im_paths,
        "mask": mask_path,
    }


def export_stack_depths(backbone: str, layers: tuple[str, ...], per_block: bool = False) -> dict:
    """Layer metadata table consumed by manifest validation on the kernel side."""
    return {
        info.key: {"channels": info.channels, "stride": info.stride}
        for info in stack_depths(backbone, layers, per_block)
    }
