"""Command line: pair images with masks, run the backbone, export arrays.

Images and masks are matched by file stem across the two directories. Exit
code 0 only if every item exported; per-item failures are reported and the
remaining items still export.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backbones import known_stages
from .export import ExportItem, ExportJob, export_features

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


def _collect_items(images_dir: Path, masks_dir: Path, classes_path: Path | None) -> list[ExportItem]:
    class_map = {}
    if classes_path is not None:
        class_map = json.loads(classes_path.read_text())
    masks = {p.stem: p for p in masks_dir.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES}
    items = []
    for image in sorted(images_dir.iterdir()):
        if image.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        mask = masks.get(image.stem)
        if mask is None:
            raise FileNotFoundError(f"no mask for image {image.name} in {masks_dir}")
        items.append(ExportItem(image=image, mask=mask, class_id=int(class_map.get(image.stem, 1))))
    if not items:
        raise FileNotFoundError(f"no images found in {images_dir}")
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmk-export", description=__doc__)
    parser.add_argument("--images", required=True, help="directory of RGB images")
    parser.add_argument("--masks", required=True, help="directory of binary masks, matched by stem")
    parser.add_argument("--backbone", choices=("resnet50", "resnet101"), default="resnet50")
    parser.add_argument(
        "--layers",
        default="conv3_x,conv4_x,conv5_x",
        help=f"comma-separated subset of {','.join(known_stages())}",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--classes", help="JSON file mapping image stem to class id")
    parser.add_argument(
        "--weights",
        default="pretrained",
        help="'pretrained', 'none' (random, seeded), or a state-dict path",
    )
    parser.add_argument("--per-block", action="store_true", help="export every bottleneck block")
    parser.add_argument("--seed", type=int, default=0, help="weight seed when --weights none")
    parser.add_argument(
        "--no-deterministic",
        dest="deterministic",
        action="store_false",
        help="skip single-thread deterministic inference settings",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        items = _collect_items(Path(args.images), Path(args.masks), Path(args.classes) if args.classes else None)
        job = ExportJob(
            items=tuple(items),
            backbone=args.backbone,
            layers=tuple(s.strip() for s in args.layers.split(",") if s.strip()),
            out_dir=Path(args.out),
            weights=args.weights,
            per_block=args.per_block,
            seed=args.seed,
            deterministic=args.deterministic,
        )
        result = export_features(job)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported {result.exported}/{len(job.items)} items to {result.index_path}")
    for stem, reason in result.failures:
        print(f"failed {stem}: {reason}", file=sys.stderr)
    return 1 if result.failures else 0


if __name__ == "__main__":
    sys.exit(main())
