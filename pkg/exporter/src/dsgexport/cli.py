"""Command-line entry point for the exporter."""

import argparse
import logging
import sys
from pathlib import Path


def _parse_grid(text):
    rows, cols = text.lower().split("x")
    return int(rows), int(cols)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dsgexport",
        description="Export ViT patch features and keypoint matches from "
                    "video frames into a DSGF dataset directory.",
    )
    parser.add_argument("--frames", required=True, help="directory of frame images")
    parser.add_argument("--out", required=True, help="output dataset directory")
    parser.add_argument("--extractor", default="patch-stats",
                        choices=["patch-stats", "vit-b16"])
    parser.add_argument("--grid", default="4x4",
                        help="patch grid for patch-stats (vit-b16 is 14x14)")
    parser.add_argument("--dim", type=int, default=32,
                        help="feature dim for patch-stats (vit-b16 is 768)")
    parser.add_argument("--window", type=int, default=4)
    parser.add_argument("--stride", type=int, default=4)
    parser.add_argument("--weights", default="none",
                        help="vit-b16 weights: none | pretrained | path to state dict")
    parser.add_argument("--no-matches", action="store_true",
                        help="skip keypoint match files")
    parser.add_argument("--labels", default=None,
                        help="CSV of frame,phase-label rows (label taken from the "
                             "window's last frame)")
    parser.add_argument("--split", default="test")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    from .export import ExportJob, export
    from .extract import ExportError

    try:
        job = ExportJob(
            frames_dir=Path(args.frames),
            out_dir=Path(args.out),
            extractor=args.extractor,
            grid=_parse_grid(args.grid),
            dim=args.dim,
            window=args.window,
            stride=args.stride,
            weights=args.weights,
            with_matches=not args.no_matches,
            labels_csv=Path(args.labels) if args.labels else None,
            split=args.split,
            seed=args.seed,
        )
        summary = export(job)
    except (ExportError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {summary['clips']} clips from {summary['frames']} frames "
          f"(grid {summary['grid'][0]}x{summary['grid'][1]}, d={summary['dim']}, "
          f"matches={'yes' if summary['matches'] else 'no'}) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
