"""Command-line surface: mask, correlate, evaluate, synth, bench.

Exit codes: 0 on success, 1 on runtime/data errors (single-line diagnostic
on stderr), 2 on usage errors. Given equal flags, seeds, and input files,
the data-producing commands write byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .arrayio import read_array_file, read_mask_file, write_array_file
from .bench import run_bench, write_csv
from .correlation import cosine_correlation
from .errors import ArrayFileError, ManifestError
from .evaluation import (
    EvalOptions,
    default_workers,
    evaluate_manifest,
    sweep_thresholds,
)
from .episodes import SynthSpec, load_manifest, synthesize_dataset
from .masking import feature_mask, hybrid_mask, im_features, input_mask

DEFAULT_THRESHOLD = 0.7


def _parse_pair(text: str, sep: str, what: str) -> tuple[float, float]:
    parts = text.split(sep)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"{what} must look like A{sep}B, got {text!r}")
    return float(parts[0]), float(parts[1])


def _hw(text: str) -> tuple[int, int]:
    h, w = text.lower().split("x")
    return int(h), int(w)


def _chw(text: str) -> tuple[int, int, int]:
    c, h, w = text.lower().split("x")
    return int(c), int(h), int(w)


def _size_list(text: str) -> list[tuple[int, int, int]]:
    return [_chw(part) for part in text.split(",")]


def _hw_list(text: str) -> tuple[tuple[int, int], ...]:
    return tuple(_hw(part) for part in text.split(","))


def _sweep(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"sweep must look like START:STOP:STEP, got {text!r}")
    return float(parts[0]), float(parts[1]), float(parts[2])


def _cmd_mask(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    feat = read_array_file(args.features)
    mask = read_mask_file(args.mask)
    if args.mode == "fm":
        out = feature_mask(feat, mask).features
    elif args.mode == "im":
        out = input_mask(feat, mask)
    else:
        if args.im_features is None:
            parser.error("--mode hybrid requires --im-features")
        fm = feature_mask(feat, mask)
        im = im_features(read_array_file(args.im_features))
        out = hybrid_mask(fm, im, args.zero_tol).features
    write_array_file(args.output, out)
    print(f"{args.mode}: wrote {out.shape} to {args.output}")
    return 0


def _cmd_correlate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    query = read_array_file(args.query)
    support = read_array_file(args.support)
    corr = cosine_correlation(query, support)
    write_array_file(args.output, corr.data)
    print(f"correlation: wrote {corr.data.shape} to {args.output}")
    return 0


def _cmd_evaluate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    manifest = load_manifest(args.manifest)
    if args.sweep is not None:
        thresholds = sweep_thresholds(*args.sweep)
    else:
        thresholds = (args.threshold,)
    options = EvalOptions(
        predictor=args.predictor,
        thresholds=thresholds,
        fuse_layers=args.fuse_layers,
        zero_tol=args.zero_tol,
        workers=args.workers,
    )
    result = evaluate_manifest(
        manifest,
        Path(args.manifest).parent,
        options,
        keep_predictions=args.dump_masks is not None,
    )
    text = json.dumps(result.report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    if args.dump_masks is not None:
        from PIL import Image

        dump_dir = Path(args.dump_masks)
        dump_dir.mkdir(parents=True, exist_ok=True)
        for idx, pred in enumerate(result.best_predictions):
            Image.fromarray(pred.data * 255, mode="L").save(dump_dir / f"ep{idx:04d}.png")
    print(
        f"{args.predictor}: miou={result.report['miou']:.4f} "
        f"fb_iou={result.report['fb_iou']:.4f} threshold={result.report['threshold']}"
    )
    return 0


def _cmd_synth(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    spec = SynthSpec(
        class_id=1,
        shots=args.shots,
        image_size=args.image_size,
        layer_sizes=args.layer_sizes,
        channels=args.channels,
        blob_count=(int(args.blobs[0]), int(args.blobs[1])),
        blob_radius=args.blob_radius,
        max_area_frac=args.max_area_frac,
        noise_sigma=args.noise,
        blur_passes=args.blur,
    )
    path = synthesize_dataset(
        out_dir=args.out,
        n_episodes=args.episodes,
        class_ids=list(range(1, args.classes + 1)),
        seed=args.seed,
        spec=spec,
        fold_id=args.fold,
    )
    print(f"synth: wrote {args.episodes} episodes to {path}")
    return 0


def _cmd_bench(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    rows = run_bench(args.sizes, reps=args.reps, zero_tol=args.zero_tol)
    if args.out:
        write_csv(rows, args.out)
    for row in rows:
        if row.mode == "hm":
            print(f"{row.size_label}: hm/fm time ratio {row.hm_fm_ratio:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="apply feature, input, or hybrid masking")
    p.add_argument("--mode", choices=("fm", "im", "hybrid"), required=True)
    p.add_argument("--features", required=True, help="feature tensor (fm/hybrid) or image tensor (im)")
    p.add_argument("--mask", required=True, help="binary mask file")
    p.add_argument("--im-features", help="input-masked features (hybrid mode)")
    p.add_argument("--zero-tol", type=float, default=0.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_mask)

    p = sub.add_parser("correlate", help="cosine correlation volume between two feature maps")
    p.add_argument("--query", required=True)
    p.add_argument("--support", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("evaluate", help="run a predictor over an episode manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument(
        "--predictor",
        choices=("gt", "prototype-fm", "prototype-im", "prototype-hm"),
        required=True,
    )
    group = p.add_mutually_exclusive_group()
    group.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    group.add_argument("--sweep", type=_sweep, help="START:STOP:STEP threshold grid")
    p.add_argument("--fuse-layers", action="store_true", help="average per-layer cosine maps")
    p.add_argument("--zero-tol", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", help="write the metrics report JSON here")
    p.add_argument("--dump-masks", help="write per-episode prediction PNGs here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("synth", help="emit a synthetic episode dataset plus manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--shots", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--fold", type=int, default=0, help="fold id recorded in the manifest")
    p.add_argument("--image-size", type=_hw, default=(64, 64))
    p.add_argument("--layer-sizes", type=_hw_list, default=((16, 16), (8, 8)))
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--blobs", type=lambda s: _parse_pair(s, ":", "blob count"), default=(1, 1))
    p.add_argument("--blob-radius", type=lambda s: _parse_pair(s, ":", "radius"), default=(4.0, 10.0))
    p.add_argument("--max-area-frac", type=float, default=None)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--blur", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("bench", help="time the masking kernels over a size grid")
    p.add_argument("--sizes", type=_size_list, default=[(64, 16, 16), (256, 32, 32), (2048, 64, 64)])
    p.add_argument("--reps", type=int, default=9)
    p.add_argument("--zero-tol", type=float, default=0.0)
    p.add_argument("-o", "--out", help="write the timing CSV here")
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", None) is None and args.command == "evaluate":
        args.workers = default_workers()
    try:
        return args.func(args, parser)
    except (OSError, ValueError, ArrayFileError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
