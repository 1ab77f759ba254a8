#!/usr/bin/env python3
"""Full pipeline on a synthetic dataset: simulate -> filter -> labels ->
split -> eval, all through the CLI entry points."""

import json
import tempfile
from pathlib import Path

from weaklabel import NoiseModel, SceneSpec
from weaklabel.cli import main
from weaklabel.simulate import write_scene

work = Path(tempfile.mkdtemp(prefix="weaklabel_demo_"))
print("working in", work)

spec = SceneSpec(
    group_count=12,
    group_size=4,
    defect_count_range=(1, 3),
    defect_size_range=(32, 56),
    defect_free_fraction=0.2,
    noise=NoiseModel(
        box_jitter_sigma=1.5,
        true_score_range=(0.35, 1.0),
        miss_rate=0.05,
        false_positive_rate=0.6,
        duplicate_prob=0.25,
    ),
    seed=31,
)
stats = write_scene(spec, work / "data")
print("simulated:", stats)

assert main(["filter", str(work / "data/detections"), str(work / "filtered"),
             "--jobs", "4"]) == 0
report = json.loads((work / "filtered/filter_report.json").read_text())
print("filter totals:", report["totals"]["stages"])

assert main(["split", str(work / "data/manifest.csv"), str(work / "split"),
             "--min-class-count", "5", "--seed", "1"]) == 0

assert main(["labels", str(work / "filtered"), str(work / "labels"),
             "--assignment", str(work / "split")]) == 0
n_label_files = len(list((work / "labels").rglob("*.txt")))
print("label files written:", n_label_files)

assert main(["eval", str(work / "filtered"), str(work / "data/labels_gt"),
             str(work / "data/manifest.csv"), "--format", "table",
             "--out", str(work / "report")]) == 0
print("curves and report.json under", work / "report")
