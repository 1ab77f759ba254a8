"""Command-line entry point composing the pipeline stages on directories.

Subcommands: simulate -> filter -> labels -> split -> eval. Every command is
deterministic given its inputs, config and seed, independent of --jobs.

Exit codes are a stable contract: 0 ok, 2 parse/validation, 3 io,
4 constraint, 5 undefined metric.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

from .core import BBox, parse_detection_file, write_detection_file
from .errors import (
    CodecError,
    InfeasibleSplitError,
    ParseError,
    SplitConvergenceError,
    UndefinedMetricError,
    ValidationError,
    WeaklabelError,
)
from .filters import FilterConfig, apply_filter_chain, sum_reports
from .labelgen import LabelGenConfig, generate_label_sets, parse_yolo_label_file, write_label_tree
from .metrics import curve_to_text, evaluate_detections
from .oracles import oracle_auc, oracle_map, oracle_mar
from .simulate import SceneSpec, write_scene
from .splitter import (
    SplitSpec,
    read_manifest,
    split_dataset,
    verify_split,
    write_assignment,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_IO = 3
EXIT_CONSTRAINT = 4
EXIT_UNDEFINED = 5

CONFIG_ENV_VAR = "WEAKLABEL_CONFIG"

log = logging.getLogger("weaklabel")


def _load_config(path: str | None) -> dict[str, Any]:
    """Read the JSON config file ({"filter": {...}, "split": {...},
    "labels": {...}}); unknown sections are rejected."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"config {path}: {e.msg}", offset=e.pos) from e
    if not isinstance(doc, dict):
        raise ParseError(f"config {path}: top level must be an object")
    unknown = set(doc) - {"filter", "split", "labels"}
    if unknown:
        raise ValidationError(f"config {path}: unknown sections {sorted(unknown)}")
    return doc


def _filter_config(args: argparse.Namespace) -> FilterConfig:
    values = dict(_load_config(args.config).get("filter", {}))
    overrides = {
        "score_threshold": args.score_thresh,
        "max_box_area_fraction": args.max_area_frac,
        "min_mask_pixels": args.min_mask_pixels,
        "nms_iou_threshold": args.nms_iou,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    return FilterConfig.from_mapping(values)


FILTER_REPORT_NAME = "filter_report.json"


def _interchange_files(in_dir: Path) -> list[Path]:
    if not in_dir.is_dir():
        raise OSError(f"{in_dir} is not a directory")
    return sorted(p for p in in_dir.glob("*.json") if p.name != FILTER_REPORT_NAME)


def _map_files(
    files: Sequence[Path], worker: Callable[[Path], Any], jobs: int
) -> list[Any]:
    """Apply worker to files, preserving file order regardless of --jobs."""
    if jobs <= 1:
        return [worker(f) for f in files]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, files))


def cmd_filter(args: argparse.Namespace) -> int:
    cfg = _filter_config(args)
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    files = _interchange_files(in_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(path: Path):
        try:
            dset = parse_detection_file(path.read_bytes())
            filtered, report = apply_filter_chain(dset, cfg)
            return (path.name, write_detection_file(filtered), filtered.image_id, report, None)
        except (ParseError, ValidationError, CodecError, OSError) as e:
            # unreadable and unparseable inputs are both listed per file
            return (path.name, None, None, None, str(e))

    results = _map_files(files, work, args.jobs)
    failures = []
    reports = {}
    for name, payload, image_id, report, error in results:
        if error is not None:
            failures.append((name, error))
            continue
        (out_dir / name).write_bytes(payload)
        reports[image_id] = report
    aggregate = sum_reports(reports[i] for i in sorted(reports))
    report_doc = {
        "config": {
            "score_threshold": cfg.score_threshold,
            "max_box_area_fraction": cfg.max_box_area_fraction,
            "min_mask_pixels": cfg.min_mask_pixels,
            "nms_iou_threshold": cfg.nms_iou_threshold,
        },
        "images": {i: reports[i].to_dict() for i in sorted(reports)},
        "totals": aggregate,
        "failures": [{"file": n, "error": e} for n, e in failures],
    }
    (out_dir / FILTER_REPORT_NAME).write_text(
        json.dumps(report_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    log.info(
        "filtered %d files: %d detections -> %d survivors",
        len(reports), aggregate["input"], aggregate["surviving"],
    )
    for name, error in failures:
        print(f"error: {name}: {error}", file=sys.stderr)
    return EXIT_PARSE if failures else EXIT_OK


def _read_assignment(assignment_dir: Path) -> dict[str, str]:
    mapping = {}
    for partition in ("train", "val", "test"):
        path = assignment_dir / f"{partition}.txt"
        if not path.is_file():
            raise OSError(f"missing {path}")
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                mapping[line.strip()] = partition
    return mapping

def cmd_labels(args: argparse.Namespace) -> int:
    cfg_doc = _load_config(args.config).get("labels", {})
    unknown = set(cfg_doc) - {"simplify_tolerance"}
    if unknown:
        raise ValidationError(f"unknown labels config keys {sorted(unknown)}")
    tolerance = args.simplify_tolerance
    if tolerance is None:
        tolerance = cfg_doc.get("simplify_tolerance", 1.0)
    cfg = LabelGenConfig(simplify_tolerance=tolerance)
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    files = _interchange_files(in_dir)
    splits = _read_assignment(Path(args.assignment)) if args.assignment else {}

    def work(path: Path):
        try:
            dset = parse_detection_file(path.read_bytes())
            triple = generate_label_sets(dset, cfg)
            return (dset, triple, None)
        except (ParseError, ValidationError, CodecError) as e:
            return (path.name, None, str(e))

    results = _map_files(files, work, args.jobs)
    failures = []
    counts = {"bbox_detector": 0, "seg_masks": 0, "bbox_from_masks": 0}
    for item, triple, error in results:
        if error is not None:
            failures.append((item, error))
            continue
        dset = item
        split = splits.get(dset.image_id, "all")
        write_label_tree(
            triple, dset.image_id, (dset.image_width, dset.image_height), out_dir, split
        )
        counts["bbox_detector"] += len(triple.bbox_detector)
        counts["seg_masks"] += len(triple.seg_masks)
        counts["bbox_from_masks"] += len(triple.bbox_from_masks)
    log.info("wrote label trees under %s: %s", out_dir, counts)
    for name, error in failures:
        print(f"error: {name}: {error}", file=sys.stderr)
    return EXIT_PARSE if failures else EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    manifest = read_manifest(args.manifest)
    values = dict(_load_config(args.config).get("split", {}))
    if args.seed is not None:
        values["seed"] = args.seed
    if args.sizes is not None:
        values["sizes"] = tuple(args.sizes)
        values["fractions"] = None
    elif args.fractions is not None:
        values["fractions"] = tuple(args.fractions)
        values.pop("sizes", None)
    if args.min_class_count is not None:
        values["min_class_count"] = args.min_class_count
    if args.defect_free_test_count is not None:
        values["defect_free_test_count"] = args.defect_free_test_count
    if "sizes" in values and values["sizes"] is not None:
        values["fractions"] = None
    spec = SplitSpec.from_mapping(values)
    assignment = split_dataset(manifest, spec)
    violations = verify_split(manifest, assignment, spec)
    if violations:  # split_dataset output must self-verify
        for v in violations:
            print(str(v), file=sys.stderr)
        return EXIT_CONSTRAINT
    write_assignment(assignment, args.out_dir)
    log.info("split sizes: %s", dict(assignment.sizes))
    print(
        " ".join(f"{p}={assignment.sizes[p]}" for p in ("train", "val", "test"))
    )
    return EXIT_OK


def _load_eval_inputs(
    pred_dir: Path, gt_dir: Path, manifest_path: Path, jobs: int
):
    manifest = read_manifest(manifest_path)
    image_ids = sorted(manifest.image_ids)
    defective = {e.image_id: not e.defect_free for e in manifest.entries}

    def work(image_id: str):
        pred_path = pred_dir / f"{image_id}.json"
        gt_path = gt_dir / f"{image_id}.txt"
        if pred_path.is_file():
            dset = parse_detection_file(pred_path.read_bytes())
            dims = (dset.image_width, dset.image_height)
            preds = [(d.box, d.score) for d in dset.detections]
        else:
            # no predictions; keep gts in normalized space (IoU-safe: there
            # is nothing of a different scale to compare against)
            dims = (1, 1)
            preds = []
        gts: list[BBox] = []
        if gt_path.is_file():
            parsed = parse_yolo_label_file(gt_path.read_text(encoding="utf-8"), dims, "detection")
            gts = [box for _, box in parsed]
        return image_id, preds, gts

    results = _map_files(image_ids, work, jobs)
    preds = {image_id: p for image_id, p, _ in results}
    gts = {image_id: g for image_id, _, g in results}
    return preds, gts, defective


def cmd_eval(args: argparse.Namespace) -> int:
    preds, gts, defective = _load_eval_inputs(
        Path(args.pred_dir), Path(args.gt_dir), Path(args.manifest), args.jobs
    )
    report = evaluate_detections(preds, gts, defective)
    if args.format == "table":
        sys.stdout.write(report.to_table())
    else:
        sys.stdout.write(report.to_json())
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out_dir / "roc.txt").write_text(
            curve_to_text(report.roc.fprs, report.roc.tprs), encoding="utf-8"
        )
        (out_dir / "pr_binary.txt").write_text(
            curve_to_text(report.pr_binary.recalls, report.pr_binary.precisions),
            encoding="utf-8",
        )
        (out_dir / "pr50.txt").write_text(
            curve_to_text(report.pr50.recalls, report.pr50.precisions), encoding="utf-8"
        )
    if args.oracle:
        image_ids = sorted(preds)
        scores = [max((s for _, s in preds[i]), default=0.0) for i in image_ids]
        labels = [defective[i] for i in image_ids]
        o_map, o_map50, o_map75 = oracle_map(preds, gts)
        lines = [
            f"oracle map={o_map:.9f} map50={o_map50:.9f} map75={o_map75:.9f}",
            f"oracle mar1={oracle_mar(preds, gts, 1):.9f} mar10={oracle_mar(preds, gts, 10):.9f}",
            f"oracle auc={oracle_auc(scores, labels):.9f}",
        ]
        sys.stdout.write("".join(line + "\n" for line in lines))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.scene:
        doc = json.loads(Path(args.scene).read_text(encoding="utf-8"))
        if args.seed is not None:
            doc["seed"] = args.seed
        spec = SceneSpec.from_mapping(doc)
    else:
        spec = SceneSpec(seed=args.seed if args.seed is not None else 0)
    stats = write_scene(spec, args.out_dir)
    print(
        f"images={stats['images']} gt={stats['gt_detections']} raw={stats['raw_detections']}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weaklabel",
        description="Zero-shot detection outputs -> filtered YOLO training labels, "
        "leakage-free splits, and detection metrics.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None,
                       help=f"JSON config file (default: ${CONFIG_ENV_VAR})")
        p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")

    p_filter = sub.add_parser("filter", help="apply the heuristic filter chain to a directory")
    p_filter.add_argument("in_dir", help="directory of interchange .json files")
    p_filter.add_argument("out_dir", help="output directory for filtered files + report")
    add_common(p_filter)
    p_filter.add_argument("--score-thresh", type=float, default=None,
                          help="confidence threshold (keep score >= t; default 0.30)")
    p_filter.add_argument("--max-area-frac", type=float, default=None,
                          help="max box area as an image fraction (strict <; default 0.20)")
    p_filter.add_argument("--min-mask-pixels", type=int, default=None,
                          help="min mask pixels (keep >= n; default 500)")
    p_filter.add_argument("--nms-iou", type=float, default=None,
                          help="NMS IoU threshold (suppress >; default 0.50)")
    p_filter.set_defaults(func=cmd_filter)

    p_labels = sub.add_parser("labels", help="write the three YOLO label trees")
    p_labels.add_argument("in_dir", help="directory of filtered interchange files")
    p_labels.add_argument("out_dir", help="root of the label trees")
    add_common(p_labels)
    p_labels.add_argument("--simplify-tolerance", type=float, default=None,
                          help="polygon simplification tolerance in pixels (default 1.0)")
    p_labels.add_argument("--assignment", default=None,
                          help="split dir with train/val/test.txt (default: split 'all')")
    p_labels.set_defaults(func=cmd_labels)

    p_split = sub.add_parser("split", help="group-aware constrained dataset split")
    p_split.add_argument("manifest", help="manifest CSV")
    p_split.add_argument("out_dir", help="output directory for train/val/test.txt")
    add_common(p_split)
    p_split.add_argument("--seed", type=int, default=None)
    p_split.add_argument("--sizes", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"),
                         default=None)
    p_split.add_argument("--fractions", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"),
                         default=None)
    p_split.add_argument("--min-class-count", type=int, default=None)
    p_split.add_argument("--defect-free-test-count", type=int, default=None)
    p_split.set_defaults(func=cmd_split)

    p_eval = sub.add_parser("eval", help="evaluate predictions against ground-truth labels")
    p_eval.add_argument("pred_dir", help="directory of interchange .json prediction files")
    p_eval.add_argument("gt_dir", help="directory of YOLO .txt ground-truth files")
    p_eval.add_argument("manifest", help="manifest CSV (defect-free flags)")
    add_common(p_eval)
    p_eval.add_argument("--format", choices=("table", "machine"), default="table")
    p_eval.add_argument("--out", default=None, help="directory for report.json + curve files")
    p_eval.add_argument("--oracle", action="store_true",
                        help="also print brute-force oracle values (small inputs only)")
    p_eval.set_defaults(func=cmd_eval)

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset")
    p_sim.add_argument("out_dir", help="output directory")
    add_common(p_sim)
    p_sim.add_argument("--scene", default=None, help="scene spec JSON (defaults otherwise)")
    p_sim.add_argument("--seed", type=int, default=None, help="override the scene seed")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ParseError, ValidationError, CodecError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (InfeasibleSplitError, SplitConvergenceError) as e:
        print(f"error: {e}", file=sys.stderr)
        for v in getattr(e, "violations", ()):
            print(f"  {v}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except UndefinedMetricError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNDEFINED
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except WeaklabelError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
