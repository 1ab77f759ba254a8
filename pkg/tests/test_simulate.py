"""Simulator determinism, noise channels, and oracle limit enforcement."""

import pytest

from weaklabel import (
    BBox,
    NoiseModel,
    SceneSpec,
    ValidationError,
    generate_scene,
    mask_to_bbox,
    nms,
    perturb_to_detections,
    rle_decode,
)
from weaklabel.oracles import (
    ORACLE_MAX_BOXES_PER_IMAGE,
    ORACLE_MAX_IMAGES,
    ORACLE_MAX_SCORES,
    oracle_auc,
    oracle_map,
    oracle_nms,
)

from conftest import random_detection_set


def small_spec(**kwargs):
    defaults = dict(
        image_width=160,
        image_height=120,
        defect_count_range=(1, 3),
        defect_size_range=(12, 24),
        group_count=4,
        group_size=3,
        defect_free_fraction=0.25,
        seed=11,
    )
    defaults.update(kwargs)
    return SceneSpec(**defaults)


class TestGenerateScene:
    def test_same_seed_identical(self):
        a_sets, a_manifest = generate_scene(small_spec())
        b_sets, b_manifest = generate_scene(small_spec())
        assert a_sets == b_sets
        assert a_manifest == b_manifest

    def test_different_seed_differs(self):
        a_sets, _ = generate_scene(small_spec(seed=1))
        b_sets, _ = generate_scene(small_spec(seed=2))
        assert a_sets != b_sets

    def test_zero_defect_range_all_defect_free(self):
        gt_sets, manifest = generate_scene(small_spec(defect_count_range=(0, 0)))
        assert all(len(s) == 0 for s in gt_sets)
        assert all(e.defect_free for e in manifest.entries)

    def test_boxes_inside_image_and_nondegenerate(self):
        gt_sets, _ = generate_scene(small_spec(seed=5, group_count=8))
        for s in gt_sets:
            for d in s.detections:
                assert 0 <= d.box.x_min < d.box.x_max <= s.image_width
                assert 0 <= d.box.y_min < d.box.y_max <= s.image_height

    def test_masks_tight_within_one_pixel(self):
        # acceptance runs 1000 scenes; keep a faster version in the suite
        for seed in range(40):
            gt_sets, _ = generate_scene(small_spec(seed=seed, group_count=2))
            for s in gt_sets:
                for d in s.detections:
                    tight = mask_to_bbox(rle_decode(d.mask))
                    assert tight.x_min >= d.box.x_min and tight.x_max <= d.box.x_max
                    assert tight.y_min >= d.box.y_min and tight.y_max <= d.box.y_max
                    assert tight.x_min - d.box.x_min <= 1
                    assert d.box.x_max - tight.x_max <= 1
                    assert tight.y_min - d.box.y_min <= 1
                    assert d.box.y_max - tight.y_max <= 1

    def test_manifest_matches_groups(self):
        spec = small_spec(group_count=5, group_size=4)
        _, manifest = generate_scene(spec)
        assert len(manifest) == 20
        groups = {}
        for e in manifest.entries:
            groups.setdefault(e.group_id, []).append(e.image_id)
        assert len(groups) == 5
        assert all(len(v) == 4 for v in groups.values())

    def test_oversized_defect_rejected(self):
        with pytest.raises(ValidationError, match="fit"):
            small_spec(defect_size_range=(12, 500))

    def test_from_mapping_round_trip(self):
        spec = small_spec(noise=NoiseModel(miss_rate=0.5))
        rebuilt = SceneSpec.from_mapping(spec.to_dict())
        assert rebuilt == spec

    def test_from_mapping_unknown_keys(self):
        with pytest.raises(ValidationError, match="unknown"):
            SceneSpec.from_mapping({"bogus": 1})
        with pytest.raises(ValidationError, match="unknown"):
            SceneSpec.from_mapping({"noise": {"bogus": 1}})


class TestPerturb:
    def test_zero_noise_is_identity_channel(self):
        gt_sets, _ = generate_scene(small_spec())
        raw = perturb_to_detections(gt_sets, small_spec())
        for gt, out in zip(gt_sets, raw):
            assert [d.box for d in out.detections] == [d.box for d in gt.detections]
            assert all(d.score == 1.0 for d in out.detections)
            assert [d.mask for d in out.detections] == [d.mask for d in gt.detections]

    def test_miss_rate_one_empties_everything(self):
        spec = small_spec(noise=NoiseModel(miss_rate=1.0))
        gt_sets, _ = generate_scene(spec)
        raw = perturb_to_detections(gt_sets, spec)
        assert all(len(s) == 0 for s in raw)

    def test_duplicates_collapsed_by_nms(self):
        spec = small_spec(noise=NoiseModel(duplicate_prob=1.0))
        gt_sets, _ = generate_scene(spec)
        raw = perturb_to_detections(gt_sets, spec)
        for gt, out in zip(gt_sets, raw):
            assert len(out) == 2 * len(gt)
            assert len(nms(out, 0.5)) == len(gt)

    def test_deterministic(self):
        spec = small_spec(noise=NoiseModel(box_jitter_sigma=2.0, miss_rate=0.2,
                                           false_positive_rate=0.5, duplicate_prob=0.3,
                                           true_score_range=(0.4, 1.0)))
        gt_sets, _ = generate_scene(spec)
        assert perturb_to_detections(gt_sets, spec) == perturb_to_detections(gt_sets, spec)

    def test_false_positives_added(self):
        spec = small_spec(noise=NoiseModel(false_positive_rate=1.0),
                          defect_count_range=(0, 0), defect_free_fraction=0.0)
        gt_sets, _ = generate_scene(spec)
        raw = perturb_to_detections(gt_sets, spec)
        assert sum(len(s) for s in raw) > 0

    def test_oversegmentation_fragments(self):
        spec = small_spec(noise=NoiseModel(oversegmentation_prob=1.0))
        gt_sets, _ = generate_scene(spec)
        raw = perturb_to_detections(gt_sets, spec)
        for gt, out in zip(gt_sets, raw):
            assert len(out) == 2 * len(gt)
            assert all(d.mask is None for d in out.detections)

    def test_rates_validated(self):
        with pytest.raises(ValidationError):
            NoiseModel(miss_rate=1.5)
        with pytest.raises(ValidationError):
            NoiseModel(true_score_range=(0.9, 0.1))


class TestMonotoneDegradation:
    def test_missing_detections_weakly_lower_mar10(self):
        # one-sided sign test over 50 seeds: raising the miss rate must not
        # systematically raise mAR@10
        from scipy import stats

        from weaklabel import mean_average_recall

        lower, higher = 0, 0
        for seed in range(50):
            spec_clean = small_spec(seed=seed, group_count=3,
                                    noise=NoiseModel(true_score_range=(0.5, 1.0)))
            spec_lossy = small_spec(seed=seed, group_count=3,
                                    noise=NoiseModel(true_score_range=(0.5, 1.0),
                                                     miss_rate=0.4))
            gt_sets, _ = generate_scene(spec_clean)
            gts = {s.image_id: [d.box for d in s.detections] for s in gt_sets}
            if sum(len(v) for v in gts.values()) == 0:
                continue

            def mar10(noisy_spec):
                raw = perturb_to_detections(gt_sets, noisy_spec)
                preds = {
                    s.image_id: [(d.box, d.score) for d in s.detections] for s in raw
                }
                return mean_average_recall(preds, gts, 10)

            clean, lossy = mar10(spec_clean), mar10(spec_lossy)
            if lossy < clean:
                lower += 1
            elif lossy > clean:
                higher += 1
        assert lower > 0
        # P(X <= higher | p=0.5) must be tiny under "no degradation"
        result = stats.binomtest(lower, lower + higher, p=0.5, alternative="greater")
        assert result.pvalue < 0.01


class TestOracleLimits:
    def test_nms_limit(self, rng):
        big = random_detection_set(rng, max_dets=ORACLE_MAX_BOXES_PER_IMAGE + 3)
        while len(big) <= ORACLE_MAX_BOXES_PER_IMAGE:
            big = random_detection_set(rng, max_dets=ORACLE_MAX_BOXES_PER_IMAGE + 3)
        with pytest.raises(ValidationError, match="limited"):
            oracle_nms(big, 0.5)

    def test_map_limits(self):
        box = BBox(0, 0, 10, 10)
        too_many_images = {f"i{k}": [(box, 1.0)] for k in range(ORACLE_MAX_IMAGES + 1)}
        gts = {k: [box] for k in too_many_images}
        with pytest.raises(ValidationError, match="limited"):
            oracle_map(too_many_images, gts)

    def test_auc_limit(self):
        n = ORACLE_MAX_SCORES + 1
        with pytest.raises(ValidationError, match="limited"):
            oracle_auc([0.5] * n, [True] * (n // 2) + [False] * (n - n // 2))

    def test_empty_inputs_agree_trivially(self):
        preds = {"a": []}
        gts = {"a": [BBox(0, 0, 4, 4)]}
        from weaklabel import coco_map

        assert oracle_map(preds, gts) == coco_map(preds, gts)
