"""Exporter command line: train the toy net and export MC-dropout bundles."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import make_dataset
from .export import export_bundles
from .train import ExporterConfig, load_checkpoint, save_checkpoint, train_toy_unet


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="segtriage-export",
        description="Train a toy dropout U-Net and export MC-dropout bundles.",
    )
    parser.add_argument("--output", required=True, help="bundle output directory")
    parser.add_argument("--images", type=int, default=24)
    parser.add_argument("--size", type=int, default=32, help="image side length")
    parser.add_argument("--passes", type=int, default=5)
    parser.add_argument("--dropout", type=float, default=0.5)
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--l2", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--checkpoint", help="optional checkpoint path to save/load")
    parser.add_argument(
        "--export-count",
        type=int,
        default=None,
        help="fresh images to export (default: same count as training)",
    )
    args = parser.parse_args(argv)

    config = ExporterConfig(
        num_images=args.images,
        image_size=args.size,
        passes=args.passes,
        dropout=args.dropout,
        epochs=args.epochs,
        learning_rate=args.lr,
        l2_alpha=args.l2,
        seed=args.seed,
        output_dir=args.output,
    )
    if args.checkpoint and Path(args.checkpoint).exists():
        model = load_checkpoint(args.checkpoint)
        print(f"loaded checkpoint {args.checkpoint}")
    else:
        model, _ = train_toy_unet(config)
        if args.checkpoint:
            save_checkpoint(model, config, args.checkpoint)
            print(f"saved checkpoint {args.checkpoint}")
    count = args.export_count or args.images
    samples = make_dataset(count, args.size, seed=args.seed + 1)
    manifest = export_bundles(model, samples, args.passes, args.output, seed=args.seed)
    print(f"exported {len(manifest['images'])} bundles to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
