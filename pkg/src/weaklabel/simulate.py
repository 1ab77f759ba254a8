"""Seeded synthetic scenario generator for desk-scale end-to-end testing.

Generates ground-truth detection sets (elliptical defects with masks) plus a
manifest, then perturbs them with configurable error modes: box jitter,
misses, false positives, duplicate boxes and oversegmented fragments. All
randomness derives from the scene seed via per-image seed-splitting, so
generation is deterministic regardless of processing order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .core import BBox, BitMask, Detection, DetectionSet, rle_encode, write_detection_file
from .errors import ValidationError
from .labelgen import render_label_file
from .metrics import iou
from .splitter import DatasetManifest, ManifestEntry, write_manifest

SIM_PROMPT = "synthetic defect"

# rejection-sampling bound on pairwise gt overlap, well under the default
# NMS threshold so a clean scene survives the filter chain unchanged
_MAX_GT_IOU = 0.1
_PLACEMENT_TRIES = 100


@dataclass(frozen=True)
class NoiseModel:
    box_jitter_sigma: float = 0.0
    true_score_range: tuple[float, float] = (1.0, 1.0)
    false_score_range: tuple[float, float] = (0.05, 0.5)
    false_positive_rate: float = 0.0
    miss_rate: float = 0.0
    duplicate_prob: float = 0.0
    oversegmentation_prob: float = 0.0

    def __post_init__(self):
        if self.box_jitter_sigma < 0:
            raise ValidationError("box_jitter_sigma must be >= 0")
        for name in ("false_positive_rate", "miss_rate", "duplicate_prob", "oversegmentation_prob"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} = {v} outside [0, 1]")
        for name in ("true_score_range", "false_score_range"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValidationError(f"{name} = {(lo, hi)} is not a range within [0, 1]")
            object.__setattr__(self, name, (float(lo), float(hi)))


@dataclass(frozen=True)
class SceneSpec:
    image_width: int = 640
    image_height: int = 480
    defect_count_range: tuple[int, int] = (0, 3)
    defect_size_range: tuple[int, int] = (32, 64)
    group_count: int = 10
    group_size: int = 4
    defect_free_fraction: float = 0.2
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0

    def __post_init__(self):
        if self.image_width < 1 or self.image_height < 1:
            raise ValidationError("image dims must be positive")
        lo, hi = (int(v) for v in self.defect_count_range)
        if not (0 <= lo <= hi):
            raise ValidationError(f"bad defect_count_range {self.defect_count_range}")
        object.__setattr__(self, "defect_count_range", (lo, hi))
        lo, hi = (int(v) for v in self.defect_size_range)
        if not (2 <= lo <= hi):
            raise ValidationError(f"defect_size_range {self.defect_size_range} must start >= 2")
        if hi > min(self.image_width, self.image_height):
            raise ValidationError(
                f"defects up to {hi}px do not fit a "
                f"{self.image_width}x{self.image_height} image"
            )
        object.__setattr__(self, "defect_size_range", (lo, hi))
        if self.group_count < 1 or self.group_size < 1:
            raise ValidationError("group_count and group_size must be >= 1")
        if not (0.0 <= self.defect_free_fraction <= 1.0):
            raise ValidationError("defect_free_fraction outside [0, 1]")

    @property
    def image_count(self) -> int:
        return self.group_count * self.group_size

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SceneSpec":
        fields = set(cls.__dataclass_fields__)
        unknown = set(data) - fields
        if unknown:
            raise ValidationError(f"unknown scene spec keys {sorted(unknown)}")
        kwargs = dict(data)
        if "noise" in kwargs and isinstance(kwargs["noise"], Mapping):
            noise_fields = set(NoiseModel.__dataclass_fields__)
            unknown = set(kwargs["noise"]) - noise_fields
            if unknown:
                raise ValidationError(f"unknown noise model keys {sorted(unknown)}")
            noise = dict(kwargs["noise"])
            for key in ("true_score_range", "false_score_range"):
                if key in noise:
                    noise[key] = tuple(noise[key])
            kwargs["noise"] = NoiseModel(**noise)
        for key in ("defect_count_range", "defect_size_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["defect_count_range"] = list(self.defect_count_range)
        doc["defect_size_range"] = list(self.defect_size_range)
        doc["noise"]["true_score_range"] = list(self.noise.true_score_range)
        doc["noise"]["false_score_range"] = list(self.noise.false_score_range)
        return doc


def _image_rng(spec: SceneSpec, stage: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([spec.seed & 0xFFFFFFFF, stage, index]))


def _ellipse_mask(spec: SceneSpec, box: BBox) -> BitMask:
    w_img, h_img = spec.image_width, spec.image_height
    grid = np.zeros((h_img, w_img), dtype=bool)
    x0, y0, x1, y1 = (int(v) for v in box.as_tuple())
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    rx, ry = (x1 - x0) / 2.0, (y1 - y0) / 2.0
    cols = np.arange(x0, x1) + 0.5
    rows = np.arange(y0, y1) + 0.5
    ell = ((cols[None, :] - cx) / rx) ** 2 + ((rows[:, None] - cy) / ry) ** 2 <= 1.0
    if not ell.any():
        ell[ell.shape[0] // 2, ell.shape[1] // 2] = True
    grid[y0:y1, x0:x1] = ell
    return BitMask(w_img, h_img, grid)


def _place_boxes(spec: SceneSpec, rng: np.random.Generator, count: int) -> list[BBox]:
    lo, hi = spec.defect_size_range
    boxes: list[BBox] = []
    for _ in range(count):
        for _ in range(_PLACEMENT_TRIES):
            w = int(rng.integers(lo, hi + 1))
            h = int(rng.integers(lo, hi + 1))
            x0 = int(rng.integers(0, spec.image_width - w + 1))
            y0 = int(rng.integers(0, spec.image_height - h + 1))
            candidate = BBox(float(x0), float(y0), float(x0 + w), float(y0 + h))
            if all(iou(candidate, b) <= _MAX_GT_IOU for b in boxes):
                boxes.append(candidate)
                break
        # unplaceable defect after the retry budget: skip it (deterministic)
    return boxes


def generate_scene(spec: SceneSpec) -> tuple[list[DetectionSet], DatasetManifest]:
    """Ground-truth detection sets plus a manifest matching the group layout."""
    scene_rng = _image_rng(spec, 0, 0)
    n = spec.image_count
    forced_free = scene_rng.random(n) < spec.defect_free_fraction
    gt_sets = []
    entries = []
    lo, hi = spec.defect_count_range
    for i in range(n):
        image_id = f"img_{i:05d}"
        group_id = f"grp_{i // spec.group_size:04d}"
        rng = _image_rng(spec, 1, i)
        count = 0 if forced_free[i] else int(rng.integers(lo, hi + 1))
        boxes = _place_boxes(spec, rng, count)
        detections = tuple(
            Detection(
                det_id=f"gt{k:03d}",
                box=box,
                score=1.0,
                class_id=0,
                prompt=SIM_PROMPT,
                source="detector",
                mask=rle_encode(_ellipse_mask(spec, box)),
            )
            for k, box in enumerate(boxes)
        )
        gt_sets.append(DetectionSet(image_id, spec.image_width, spec.image_height, detections))
        entries.append(
            ManifestEntry(
                image_id=image_id,
                group_id=group_id,
                class_counts=((0, len(boxes)),) if boxes else (),
                defect_free=not boxes,
            )
        )
    return gt_sets, DatasetManifest(tuple(entries))


def _jitter_box(
    box: BBox, rng: np.random.Generator, sigma: float, w_img: int, h_img: int
) -> BBox:
    if sigma == 0:
        return box
    x0, y0, x1, y1 = (v + sigma * rng.standard_normal() for v in box.as_tuple())
    x0 = min(max(x0, 0.0), w_img - 1.0)
    y0 = min(max(y0, 0.0), h_img - 1.0)
    x1 = min(max(x1, x0 + 1.0), float(w_img))
    y1 = min(max(y1, y0 + 1.0), float(h_img))
    return BBox(x0, y0, x1, y1)


def _split_box(box: BBox, rng: np.random.Generator) -> list[BBox]:
    """Fragment a box in two along its longer side (oversegmentation mode)."""
    x0, y0, x1, y1 = box.as_tuple()
    frac = 0.4 + 0.2 * rng.random()
    if (x1 - x0) >= (y1 - y0):
        xm = x0 + frac * (x1 - x0)
        return [BBox(x0, y0, xm, y1), BBox(xm, y0, x1, y1)]
    ym = y0 + frac * (y1 - y0)
    return [BBox(x0, y0, x1, ym), BBox(x0, ym, x1, y1)]


def perturb_to_detections(gt_sets: list[DetectionSet], spec: SceneSpec) -> list[DetectionSet]:
    """Apply the noise model to ground truth, emulating raw detector output."""
    noise = spec.noise
    out = []
    for i, gt in enumerate(gt_sets):
        rng = _image_rng(spec, 2, i)
        detections: list[Detection] = []
        seq = 0

        def emit(box: BBox, score: float, mask) -> None:
            nonlocal seq
            detections.append(
                Detection(
                    det_id=f"p{seq:04d}",
                    box=box,
                    score=float(score),
                    class_id=0,
                    prompt=SIM_PROMPT,
                    source="detector",
                    mask=mask,
                )
            )
            seq += 1

        for d in gt.detections:
            if rng.random() < noise.miss_rate:
                continue
            lo, hi = noise.true_score_range
            if rng.random() < noise.oversegmentation_prob:
                for frag in _split_box(d.box, rng):
                    frag = _jitter_box(frag, rng, noise.box_jitter_sigma,
                                       gt.image_width, gt.image_height)
                    emit(frag, rng.uniform(lo, hi), None)
                continue
            copies = 2 if rng.random() < noise.duplicate_prob else 1
            for _ in range(copies):
                box = _jitter_box(d.box, rng, noise.box_jitter_sigma,
                                  gt.image_width, gt.image_height)
                emit(box, rng.uniform(lo, hi), d.mask)
        n_false = int(rng.poisson(noise.false_positive_rate))
        if n_false:
            lo, hi = noise.false_score_range
            for box in _place_boxes(spec, rng, n_false):
                emit(box, rng.uniform(lo, hi), None)
        out.append(gt.replace_detections(detections))
    return out


def write_scene(spec: SceneSpec, out_dir: str | Path) -> dict[str, Any]:
    """Materialize a full dataset: raw interchange files, manifest, gt labels.

    Layout: {out}/detections/{image_id}.json, {out}/labels_gt/{image_id}.txt,
    {out}/manifest.csv, {out}/scene.json.
    """
    out_dir = Path(out_dir)
    gt_sets, manifest = generate_scene(spec)
    perturbed = perturb_to_detections(gt_sets, spec)
    det_dir = out_dir / "detections"
    gt_dir = out_dir / "labels_gt"
    det_dir.mkdir(parents=True, exist_ok=True)
    gt_dir.mkdir(parents=True, exist_ok=True)
    for gt, raw in zip(gt_sets, perturbed):
        (det_dir / f"{raw.image_id}.json").write_bytes(write_detection_file(raw))
        text = render_label_file(
            [(d.class_id, d.box) for d in gt.detections],
            (gt.image_width, gt.image_height),
            "detection",
        )
        (gt_dir / f"{gt.image_id}.txt").write_text(text, encoding="utf-8", newline="\n")
    write_manifest(manifest, out_dir / "manifest.csv")
    (out_dir / "scene.json").write_text(
        json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return {
        "images": len(gt_sets),
        "gt_detections": sum(len(s) for s in gt_sets),
        "raw_detections": sum(len(s) for s in perturbed),
    }
