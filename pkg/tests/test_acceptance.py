"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines as they complete.
"""

import json
import time
from contextlib import contextmanager

import numpy as np

from weaklabel import (
    BBox,
    BitMask,
    NoiseModel,
    SceneSpec,
    binary_pr_ap,
    build_groups,
    coco_map,
    filter_box_size,
    filter_mask_area,
    generate_scene,
    iou,
    mean_average_recall,
    nms,
    parse_detection_file,
    parse_yolo_label_file,
    rle_decode,
    rle_encode,
    roc_auc,
    split_dataset,
    to_yolo_detection_line,
    verify_split,
    write_detection_file,
)
from weaklabel.cli import main
from weaklabel.labelgen import render_label_file
from weaklabel.oracles import oracle_auc, oracle_map, oracle_mar, oracle_nms
from weaklabel.simulate import write_scene
from weaklabel.splitter import SplitAssignment, SplitSpec

from conftest import clustered_box, random_detection_set, random_mask


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"[acceptance] {name}: FAIL")
        raise
    print(f"[acceptance] {name}: PASS")


def _random_eval_instance(rng):
    # spans the full documented oracle limits: <=5 images, <=6 boxes each
    n_imgs = int(rng.integers(1, 6))
    preds, gts = {}, {}
    for i in range(n_imgs):
        key = f"im{i}"
        gts[key] = [clustered_box(rng) for _ in range(int(rng.integers(0, 7)))]
        preds[key] = [
            (clustered_box(rng), float(rng.integers(0, 5)) / 4.0)
            for _ in range(int(rng.integers(0, 7)))
        ]
    return preds, gts


def test_metric_oracle_equivalence():
    """Production metrics agree with the naive oracles on 10,000 instances."""
    rng = np.random.default_rng(7_031)
    started = time.perf_counter()
    with criterion("metric-oracle equivalence (10,000 instances, <60 s)"):
        # 4,000 NMS instances: exact kept-set equality
        for _ in range(4000):
            dset = random_detection_set(
                rng, max_dets=6, with_masks=False, tie_scores=bool(rng.integers(0, 2))
            )
            threshold = float(rng.choice([0.0, 0.2, 0.5, 0.7, 1.0]))
            kept = tuple(d.det_id for d in nms(dset, threshold).detections)
            assert kept == oracle_nms(dset, threshold)

        # 3,000 mAP/mAR instances at 1e-9
        checked_gt = 0
        for _ in range(3000):
            preds, gts = _random_eval_instance(rng)
            if sum(len(v) for v in gts.values()) == 0:
                continue
            checked_gt += 1
            got = coco_map(preds, gts)
            want = oracle_map(preds, gts)
            for g, w in zip(got, want):
                assert abs(g - w) <= 1e-9
            for k in (1, 10):
                assert abs(
                    mean_average_recall(preds, gts, k) - oracle_mar(preds, gts, k)
                ) <= 1e-9
        assert checked_gt > 2500

        # 3,000 AUC instances at 1e-12, up to the documented 200-score limit
        for _ in range(3000):
            n = int(rng.integers(2, 201))
            scores = (rng.integers(0, 8, size=n) / 7.0).tolist()
            labels = (rng.random(n) < 0.5).tolist()
            if all(labels) or not any(labels):
                labels[0], labels[-1] = True, False
            _, auc = roc_auc(scores, labels)
            assert abs(auc - oracle_auc(scores, labels)) <= 1e-12

        elapsed = time.perf_counter() - started
        assert elapsed < 60, f"oracle equivalence took {elapsed:.1f}s"


def test_hand_derived_metric_cases():
    """Frozen hand-evaluated values, tolerance 1e-9."""
    with criterion("hand-derived metric cases (1e-9)"):
        assert abs(iou(BBox(0, 0, 2, 2), BBox(1, 1, 3, 3)) - 1 / 7) <= 1e-9

        gt = {"i": [BBox(0, 0, 10, 10)]}
        pred_06 = {"i": [(BBox(0, 2.5, 10, 12.5), 0.9)]}
        m, m50, m75 = coco_map(pred_06, gt)
        assert abs(m50 - 1.0) <= 1e-9
        assert abs(m75 - 0.0) <= 1e-9
        assert abs(m - 0.3) <= 1e-9
        assert abs(mean_average_recall(pred_06, gt, 1) - 0.3) <= 1e-9

        trailing = {"i": [(BBox(0, 0, 10, 10), 0.9), (BBox(50, 50, 60, 60), 0.8)]}
        assert abs(coco_map(trailing, gt)[0] - 1.0) <= 1e-9

        _, auc = roc_auc([0.9, 0.4, 0.6, 0.2], [True, True, False, False])
        assert abs(auc - 0.75) <= 1e-9

        _, ap = binary_pr_ap([0.9, 0.8, 0.7, 0.6], [True, False, True, False])
        assert abs(ap - 5 / 6) <= 1e-9


def test_filter_boundary_semantics():
    """The wording boundaries: >=500 pixels kept, exactly-20% area removed."""
    from conftest import random_detection_set  # noqa: F401  (symmetry with others)
    from weaklabel import Detection, DetectionSet

    with criterion("filter boundary semantics (exact)"):
        def masked(det_id, pixels):
            data = np.zeros(100 * 100, bool)
            data[:pixels] = True
            return Detection(
                det_id, BBox(0, 0, 10, 10), 0.9, 0, "p", "detector",
                mask=rle_encode(BitMask(100, 100, data.reshape(100, 100))),
            )

        dset = DetectionSet("img", 100, 100, (masked("at499", 499), masked("at500", 500)))
        kept = filter_mask_area(dset, 500)
        assert [d.det_id for d in kept.detections] == ["at500"]

        boundary = DetectionSet(
            "img", 100, 100,
            (Detection("exact20", BBox(0, 0, 50, 40), 0.9, 0, "p", "detector"),),
        )
        assert boundary.detections[0].box.area == 0.20 * 100 * 100
        assert filter_box_size(boundary, 0.20).detections == ()


CLOSURE_SPEC = SceneSpec(
    image_width=640,
    image_height=480,
    defect_count_range=(1, 3),
    defect_size_range=(32, 56),
    group_count=50,
    group_size=4,
    defect_free_fraction=0.2,
    noise=NoiseModel(),  # identity channel
    seed=424242,
)


def test_end_to_end_closure(tmp_path):
    """Zero-noise 200-image dataset: filter -> labels -> eval gives exact 1.0."""
    started = time.perf_counter()
    with criterion("end-to-end closure (200 images, exact 1.0, <30 s)"):
        data = tmp_path / "data"
        stats = write_scene(CLOSURE_SPEC, data)
        assert stats["images"] == 200

        filtered = tmp_path / "filtered"
        assert main(["filter", str(data / "detections"), str(filtered)]) == 0
        labels = tmp_path / "labels"
        assert main(["labels", str(filtered), str(labels)]) == 0
        for variant in ("bbox_detector", "seg_masks", "bbox_from_masks"):
            assert len(list((labels / variant / "all").glob("*.txt"))) == 200

        report_dir = tmp_path / "report"
        code = main([
            "eval", str(filtered), str(data / "labels_gt"), str(data / "manifest.csv"),
            "--format", "machine", "--out", str(report_dir),
        ])
        assert code == 0
        report = json.loads((report_dir / "report.json").read_text())
        assert report["map"] == 1.0
        assert report["map50"] == 1.0
        assert report["map75"] == 1.0
        assert report["mar10"] == 1.0
        assert report["auc"] == 1.0

        elapsed = time.perf_counter() - started
        assert elapsed < 30, f"closure took {elapsed:.1f}s"


SPLIT_SCENE = dict(
    image_width=160,
    image_height=120,
    defect_count_range=(1, 4),
    defect_size_range=(8, 16),
    group_count=60,
    group_size=4,
    defect_free_fraction=0.1,
)


def _split_spec(seed: int) -> SplitSpec:
    # small val/test partitions: the 20-occurrence minimum genuinely binds
    # (typical partitions of 3 groups hold ~30 defects, the floor is ~12)
    return SplitSpec(
        fractions=(0.9, 0.05, 0.05),
        min_class_count=20,
        defect_free_test_count=8,
        seed=seed,
    )


def _valid_split(seed: int):
    _, manifest = generate_scene(SceneSpec(**SPLIT_SCENE, seed=seed))
    spec = _split_spec(seed)
    return manifest, split_dataset(manifest, spec), spec


def _mutant(assignment, updates):
    mapping = dict(assignment.assignment)
    mapping.update(updates)
    return SplitAssignment(mapping, assignment.sizes, assignment.class_counts,
                           assignment.seed)


def test_split_constraints_100_seeds():
    """verify_split is clean on 100 seeds and catches every mutation kind."""
    with criterion("split constraints (100 seeds + mutation testing)"):
        for seed in range(100):
            manifest, assignment, spec = _valid_split(seed)
            assert verify_split(manifest, assignment, spec) == []

        detected = {"group_integrity": 0, "size": 0, "class_count": 0, "defect_free": 0}
        attempts = {k: 0 for k in detected}
        for seed in range(0, 40, 2):
            manifest, assignment, spec = _valid_split(seed)
            groups = build_groups(manifest)
            unpinned = [g for g in groups if not g.pinned]
            by_part = {
                p: [g for g in unpinned if assignment.assignment[g.image_ids[0]] == p]
                for p in ("train", "val", "test")
            }

            # group integrity: strand one image of a multi-image group
            g = next(g for g in unpinned if g.size > 1)
            current = assignment.assignment[g.image_ids[0]]
            other = "train" if current != "train" else "val"
            kinds = {
                v.kind
                for v in verify_split(
                    manifest, _mutant(assignment, {g.image_ids[0]: other}), spec
                )
            }
            attempts["group_integrity"] += 1
            detected["group_integrity"] += "group_integrity" in kinds

            # size: drain two whole groups out of val (tolerance is one group)
            if len(by_part["val"]) >= 2:
                updates = {
                    i: "train" for g2 in by_part["val"][:2] for i in g2.image_ids
                }
                kinds = {
                    v.kind
                    for v in verify_split(manifest, _mutant(assignment, updates), spec)
                }
                attempts["size"] += 1
                detected["size"] += "size" in kinds

            # class count: swap every val group against train's poorest of
            # equal size, starving val below the minimum without touching
            # sizes, groups, or defect-free placement
            val_groups = sorted(by_part["val"], key=lambda g2: -g2.count(0))
            train_groups = sorted(by_part["train"], key=lambda g2: g2.count(0))
            updates = {}
            val_count = sum(g2.count(0) for g2 in by_part["val"])
            for rich, poor in zip(val_groups, train_groups):
                updates.update({i: "train" for i in rich.image_ids})
                updates.update({i: "val" for i in poor.image_ids})
                val_count += poor.count(0) - rich.count(0)
            if val_count < spec.min_class_count:
                kinds = {
                    v.kind
                    for v in verify_split(manifest, _mutant(assignment, updates), spec)
                }
                attempts["class_count"] += 1
                detected["class_count"] += "class_count" in kinds

            # defect-free confinement: move a pinned group into train
            pinned = next(g for g in groups if g.pinned)
            updates = {i: "train" for i in pinned.image_ids}
            kinds = {
                v.kind
                for v in verify_split(manifest, _mutant(assignment, updates), spec)
            }
            attempts["defect_free"] += 1
            detected["defect_free"] += "defect_free" in kinds

        for kind in detected:
            assert attempts[kind] >= 10, f"too few {kind} mutations exercised"
            assert detected[kind] == attempts[kind], f"missed {kind} mutations"


def test_format_fidelity(rng):
    """Byte-determinism and round-trip tolerances of every file format."""
    with criterion("format fidelity (YOLO, interchange, RLE)"):
        # YOLO writer byte-determinism
        entries = [
            (0, BBox(float(rng.integers(0, 50)), float(rng.integers(0, 50)),
                     float(rng.integers(51, 120)), float(rng.integers(51, 120))))
            for _ in range(20)
        ]
        text = render_label_file(entries, (128, 128), "detection")
        assert text == render_label_file(entries, (128, 128), "detection")

        # YOLO round-trip within 1e-6 per normalized coordinate
        for _ in range(500):
            w_img = int(rng.integers(32, 4096))
            h_img = int(rng.integers(32, 4096))
            x0 = float(rng.uniform(0, w_img * 0.8))
            y0 = float(rng.uniform(0, h_img * 0.8))
            box = BBox(
                x0, y0,
                float(rng.uniform(x0 + w_img * 0.01, w_img)),
                float(rng.uniform(y0 + h_img * 0.01, h_img)),
            )
            line = to_yolo_detection_line(0, box, (w_img, h_img))
            ((_, back),) = parse_yolo_label_file(line, (w_img, h_img), "detection")
            for got, want, dim in zip(
                back.as_tuple(), box.as_tuple(), (w_img, h_img, w_img, h_img)
            ):
                assert abs(got - want) / dim <= 1e-6

        # interchange canonical byte-identity
        for _ in range(300):
            dset = random_detection_set(rng)
            payload = write_detection_file(dset)
            assert write_detection_file(parse_detection_file(payload)) == payload

        # RLE codec exact on 1000 random masks
        for _ in range(1000):
            mask = random_mask(rng, max_side=16)
            assert rle_decode(rle_encode(mask)) == mask


def test_parallel_determinism(tmp_path):
    """cmd_filter and cmd_eval are bit-identical at --jobs 1 vs --jobs 4."""
    with criterion("determinism under parallelism (--jobs 1 vs 4)"):
        spec = SceneSpec(
            image_width=320,
            image_height=240,
            defect_count_range=(1, 3),
            defect_size_range=(20, 40),
            group_count=15,
            group_size=4,
            defect_free_fraction=0.2,
            noise=NoiseModel(
                box_jitter_sigma=2.0,
                true_score_range=(0.2, 1.0),
                miss_rate=0.1,
                false_positive_rate=0.7,
                duplicate_prob=0.3,
                oversegmentation_prob=0.2,
            ),
            seed=99,
        )
        data = tmp_path / "data"
        write_scene(spec, data)

        trees = {}
        for jobs in ("1", "4"):
            out = tmp_path / f"filtered_j{jobs}"
            assert main(["filter", str(data / "detections"), str(out),
                         "--jobs", jobs]) == 0
            trees[jobs] = {
                p.name: p.read_bytes() for p in sorted(out.glob("*.json"))
            }
        assert trees["1"] == trees["4"]

        reports = {}
        for jobs in ("1", "4"):
            out = tmp_path / f"report_j{jobs}"
            assert main(["eval", str(tmp_path / "filtered_j1"), str(data / "labels_gt"),
                         str(data / "manifest.csv"), "--format", "machine",
                         "--jobs", jobs, "--out", str(out)]) == 0
            reports[jobs] = (out / "report.json").read_bytes()
        assert reports["1"] == reports["4"]
