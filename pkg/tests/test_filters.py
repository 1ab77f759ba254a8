"""Filter chain semantics, boundary rules, and NMS-vs-oracle agreement."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weaklabel import (
    BBox,
    BitMask,
    Detection,
    DetectionSet,
    FilterConfig,
    ValidationError,
    apply_filter_chain,
    filter_box_size,
    filter_confidence,
    filter_mask_area,
    iou,
    nms,
    rle_encode,
)
from weaklabel.filters import sum_reports
from weaklabel.oracles import oracle_nms

from conftest import random_detection_set


def det(det_id, box, score, mask=None):
    return Detection(det_id, box, score, 0, "cells", "detector", mask=mask)


def dset(*dets, w=100, h=100):
    return DetectionSet("img", w, h, tuple(dets))


def square_mask(pixels: int, w=100, h=100):
    data = np.zeros(h * w, bool)
    data[:pixels] = True
    return rle_encode(BitMask(w, h, data.reshape(h, w)))


class TestConfidence:
    def test_zero_threshold_is_identity(self):
        s = dset(det("a", BBox(0, 0, 10, 10), 0.0), det("b", BBox(0, 0, 10, 10), 0.7))
        assert filter_confidence(s, 0.0) == s

    def test_threshold_one_keeps_only_exact_ones(self):
        s = dset(det("a", BBox(0, 0, 10, 10), 0.4), det("b", BBox(0, 0, 10, 10), 0.9))
        assert filter_confidence(s, 1.0).detections == ()
        s2 = dset(det("a", BBox(0, 0, 10, 10), 1.0))
        assert len(filter_confidence(s2, 1.0)) == 1

    def test_inclusive_boundary(self):
        s = dset(
            det("a", BBox(0, 0, 10, 10), 0.2),
            det("b", BBox(0, 0, 10, 10), 0.3),
            det("c", BBox(0, 0, 10, 10), 0.8),
        )
        kept = filter_confidence(s, 0.30)
        assert [d.det_id for d in kept.detections] == ["b", "c"]


class TestBoxSize:
    def test_exactly_twenty_percent_removed(self):
        # 100x100 image: 50x40 box covers exactly 20% and must go
        s = dset(det("a", BBox(0, 0, 50, 40), 0.9))
        assert filter_box_size(s, 0.20).detections == ()

    def test_below_threshold_kept(self):
        s = dset(det("a", BBox(0, 0, 40, 40), 0.9))
        assert len(filter_box_size(s, 0.20)) == 1

    def test_full_image_box_removed_even_at_fraction_one(self):
        s = dset(det("a", BBox(0, 0, 100, 100), 0.9))
        assert filter_box_size(s, 1.0).detections == ()


class TestMaskArea:
    def test_499_removed_500_kept(self):
        s = dset(
            det("small", BBox(0, 0, 10, 10), 0.9, mask=square_mask(499)),
            det("big", BBox(0, 0, 10, 10), 0.8, mask=square_mask(500)),
        )
        kept = filter_mask_area(s, 500)
        assert [d.det_id for d in kept.detections] == ["big"]

    def test_maskless_passes_any_threshold(self):
        s = dset(det("a", BBox(0, 0, 10, 10), 0.9))
        assert len(filter_mask_area(s, 10**9)) == 1


class TestNms:
    def test_single_detection(self):
        s = dset(det("a", BBox(0, 0, 10, 10), 0.5))
        assert nms(s, 0.5) == s

    def test_identical_boxes_keep_highest(self):
        s = dset(det("lo", BBox(0, 0, 10, 10), 0.8), det("hi", BBox(0, 0, 10, 10), 0.9))
        kept = nms(s, 0.5)
        assert [d.det_id for d in kept.detections] == ["hi"]

    def test_three_box_example(self):
        b1 = det("b1", BBox(0, 0, 10, 10), 0.9)
        b2 = det("b2", BBox(1, 1, 11, 11), 0.8)  # IoU 81/119 with b1
        b3 = det("b3", BBox(20, 20, 30, 30), 0.7)
        assert iou(b1.box, b2.box) == pytest.approx(81 / 119)
        kept = nms(dset(b1, b2, b3), 0.5)
        assert [d.det_id for d in kept.detections] == ["b1", "b3"]

    def test_exactly_at_threshold_coexists(self):
        # IoU exactly 0.5: suppression is strict ">"
        a = det("a", BBox(0, 0, 10, 10), 0.9)
        b = det("b", BBox(0, 0, 10, 5), 0.8)
        assert iou(a.box, b.box) == 0.5
        assert len(nms(dset(a, b), 0.5)) == 2

    def test_score_tie_broken_by_input_order(self):
        a = det("first", BBox(0, 0, 10, 10), 0.8)
        b = det("second", BBox(0, 0, 10, 10), 0.8)
        kept = nms(dset(a, b), 0.5)
        assert [d.det_id for d in kept.detections] == ["first"]

    def test_output_sorted_by_descending_score(self, rng):
        for _ in range(50):
            s = random_detection_set(rng, max_dets=6)
            kept = nms(s, 0.5)
            scores = [d.score for d in kept.detections]
            assert scores == sorted(scores, reverse=True)

    def test_matches_oracle(self, rng):
        for _ in range(500):
            s = random_detection_set(rng, max_dets=6, tie_scores=bool(rng.integers(0, 2)))
            threshold = float(rng.choice([0.0, 0.3, 0.5, 0.8, 1.0]))
            kept = tuple(d.det_id for d in nms(s, threshold).detections)
            assert kept == oracle_nms(s, threshold)

    def test_antichain_property(self, rng):
        for _ in range(100):
            s = random_detection_set(rng, max_dets=8)
            kept = nms(s, 0.5).detections
            for i in range(len(kept)):
                for j in range(i + 1, len(kept)):
                    assert iou(kept[i].box, kept[j].box) <= 0.5


class TestChain:
    def test_permissive_config_is_identity_up_to_sorting(self, rng):
        cfg = FilterConfig(
            score_threshold=0.0, max_box_area_fraction=1.0, min_mask_pixels=0,
            nms_iou_threshold=1.0,
        )
        for _ in range(20):
            s = random_detection_set(rng)
            out, report = apply_filter_chain(s, cfg)
            assert sorted(d.det_id for d in out.detections) == sorted(
                d.det_id for d in s.detections
            )
            assert report.removed_total == 0

    def test_empty_set(self):
        out, report = apply_filter_chain(dset(), FilterConfig())
        assert out.detections == ()
        assert report.input_count == 0 and report.surviving == 0
        for stage in report.stages:
            assert stage.removed == 0

    def test_equals_sequential_standalone_ops(self, rng):
        cfg = FilterConfig(
            score_threshold=0.25, max_box_area_fraction=0.3, min_mask_pixels=50,
            nms_iou_threshold=0.5,
        )
        for _ in range(100):
            s = random_detection_set(rng)
            out, _ = apply_filter_chain(s, cfg)
            manual = nms(
                filter_mask_area(
                    filter_box_size(filter_confidence(s, 0.25), 0.3), 50
                ),
                0.5,
            )
            assert out == manual

    def test_report_conservation(self, rng):
        cfg = FilterConfig(score_threshold=0.5, max_box_area_fraction=0.25,
                           min_mask_pixels=100, nms_iou_threshold=0.4)
        for _ in range(100):
            s = random_detection_set(rng)
            out, report = apply_filter_chain(s, cfg)
            assert report.removed_total + len(out) == len(s)
            all_removed = [i for st_ in report.stages for i in st_.removed_ids]
            assert len(all_removed) == len(set(all_removed))

    def test_idempotence(self, rng):
        cfg = FilterConfig(score_threshold=0.4, max_box_area_fraction=0.5,
                           min_mask_pixels=20, nms_iou_threshold=0.5)
        for _ in range(50):
            s = random_detection_set(rng)
            once, _ = apply_filter_chain(s, cfg)
            twice, report = apply_filter_chain(once, cfg)
            assert twice == once
            assert report.removed_total == 0

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_monotonicity_of_predicate_stages(self, data):
        # The score/size/mask stages are per-detection predicates, so
        # tightening any of them can only shrink the surviving set. (NMS is
        # excluded: dropping a suppressor can re-enable a suppressed box.)
        seed = data.draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        s = random_detection_set(rng)
        base = (0.3, 0.4, 50)
        tighter = data.draw(st.sampled_from([(0.5, 0.4, 50), (0.3, 0.2, 50), (0.3, 0.4, 200)]))

        def predicate_stages(src, params):
            thr, frac, pixels = params
            return {
                d.det_id
                for d in filter_mask_area(
                    filter_box_size(filter_confidence(src, thr), frac), pixels
                ).detections
            }

        assert predicate_stages(s, tighter) <= predicate_stages(s, base)

    def test_nms_can_reenable_after_tightening(self):
        # documents why monotonicity stops at the NMS stage
        a = det("a", BBox(0, 0, 10, 10), 0.9, mask=square_mask(100))
        b = det("b", BBox(1, 1, 11, 11), 0.8)
        loose = FilterConfig(0.0, 1.0, 50, 0.5)
        tight = FilterConfig(0.0, 1.0, 200, 0.5)
        survivors_loose = {d.det_id for d in apply_filter_chain(dset(a, b), loose)[0].detections}
        survivors_tight = {d.det_id for d in apply_filter_chain(dset(a, b), tight)[0].detections}
        assert survivors_loose == {"a"}
        assert survivors_tight == {"b"}

    def test_sum_reports(self, rng):
        cfg = FilterConfig()
        reports = [apply_filter_chain(random_detection_set(rng), cfg)[1] for _ in range(10)]
        agg = sum_reports(reports)
        assert agg["input"] == sum(r.input_count for r in reports)
        assert agg["surviving"] == sum(r.surviving for r in reports)
        for name in ("score", "size", "mask_area", "nms"):
            stage = agg["stages"][name]
            assert stage["input"] - stage["removed"] == stage["surviving"]


class TestConfig:
    def test_defaults(self):
        cfg = FilterConfig()
        assert (cfg.score_threshold, cfg.max_box_area_fraction) == (0.30, 0.20)
        assert (cfg.min_mask_pixels, cfg.nms_iou_threshold) == (500, 0.50)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"score_threshold": -0.1},
            {"score_threshold": 1.1},
            {"max_box_area_fraction": 0.0},
            {"max_box_area_fraction": 1.2},
            {"min_mask_pixels": -1},
            {"nms_iou_threshold": 2.0},
        ],
    )
    def test_range_validation(self, kwargs):
        with pytest.raises(ValidationError):
            FilterConfig(**kwargs)

    def test_from_mapping_rejects_unknown_keys(self):
        with pytest.raises(ValidationError, match="unknown"):
            FilterConfig.from_mapping({"score_threshold": 0.5, "bogus": 1})
