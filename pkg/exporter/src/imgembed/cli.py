"""Command line wrapper: imgembed DATASET_ROOT -o OUT_DIR [options]."""

from __future__ import annotations

import argparse
import sys

from .backbone import BACKBONES, WeightsUnavailableError
from .export import DatasetLayoutError, ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imgembed",
        description=(
            "Export backbone features for a one-folder-per-class image tree "
            "into a manifest + float32 blob cache."
        ),
    )
    parser.add_argument("root", help="dataset root with one subfolder per class")
    parser.add_argument("-o", "--out", required=True, help="output directory")
    parser.add_argument("--backbone", default="resnet18", choices=BACKBONES)
    parser.add_argument(
        "--weights",
        default="pretrained",
        choices=("pretrained", "none"),
        help="'none' builds a seeded randomly initialized backbone (offline)",
    )
    parser.add_argument("--image-size", type=int, default=84)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument(
        "--seed", type=int, default=0, help="init seed, used only with --weights none"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            root=args.root,
            out_dir=args.out,
            backbone=args.backbone,
            weights=args.weights,
            image_size=args.image_size,
            batch_size=args.batch_size,
            init_seed=args.seed,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        result = export(job)
    except (DatasetLayoutError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except WeightsUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for rel in result.skipped:
        print(f"skipped: {rel}", file=sys.stderr)
    print(
        f"wrote {result.count} x {result.dim} features for "
        f"{len(result.class_names)} classes to {result.manifest_path}"
        + (f" ({len(result.skipped)} skipped)" if result.skipped else "")
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
