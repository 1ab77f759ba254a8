"""Command-line entry point: detect and segment stages."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .adapter import AdapterConfig, find_images, run_detector, run_segmenter
from .backends import (
    DEFAULT_DETECTOR_MODEL,
    DEFAULT_SEGMENTER_MODEL,
    BackendError,
    make_backend,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zsadapter",
        description="Run zero-shot detection/segmentation on images and emit "
        "interchange .json files.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--images", required=True, help="directory of input images")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--device", default="cpu")
        p.add_argument("--backend", choices=("transformers", "stub"),
                       default="transformers")
        p.add_argument("--batch-size", type=int, default=1)

    p_det = sub.add_parser("detect", help="prompted box detection")
    common(p_det)
    p_det.add_argument("--prompt", required=True, help="defect descriptor text")
    p_det.add_argument("--detector-model", default=DEFAULT_DETECTOR_MODEL)
    p_det.add_argument("--box-threshold", type=float, default=0.25,
                       help="detector box confidence threshold (library default)")
    p_det.add_argument("--text-threshold", type=float, default=0.25,
                       help="detector text matching threshold (library default)")

    p_seg = sub.add_parser("segment", help="refine detector boxes into masks")
    common(p_seg)
    p_seg.add_argument("--detections", required=True,
                       help="directory of detector-stage .json files")
    p_seg.add_argument("--segmenter-model", default=DEFAULT_SEGMENTER_MODEL)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "detect":
            cfg = AdapterConfig(
                prompt=args.prompt,
                out_dir=Path(args.out),
                detector_model=args.detector_model,
                device=args.device,
                batch_size=args.batch_size,
            )
            backend = (
                make_backend("stub")
                if args.backend == "stub"
                else make_backend(
                    "transformers",
                    detector_model=args.detector_model,
                    device=args.device,
                    box_threshold=args.box_threshold,
                    text_threshold=args.text_threshold,
                )
            )
            written = run_detector(find_images(args.images), backend, cfg)
        else:
            detection_files = sorted(Path(args.detections).glob("*.json"))
            cfg = AdapterConfig(
                prompt="(segment stage)",
                out_dir=Path(args.out),
                segmenter_model=args.segmenter_model,
                device=args.device,
                batch_size=args.batch_size,
            )
            backend = (
                make_backend("stub")
                if args.backend == "stub"
                else make_backend("transformers", segmenter_model=args.segmenter_model,
                                  device=args.device)
            )
            written = run_segmenter(detection_files, args.images, backend, cfg)
    except BackendError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {len(written)} files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
