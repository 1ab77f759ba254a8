"""Heuristic filter chain turning raw detector output into retained labels.

Stage order is fixed: confidence -> box size -> mask area -> NMS. Each stage
is also exposed standalone; ``apply_filter_chain`` composes them and returns
a per-stage audit report that accounts for every removed detection exactly
once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .core import DetectionSet
from .errors import ValidationError
from .metrics import iou

STAGE_NAMES = ("score", "size", "mask_area", "nms")


@dataclass(frozen=True)
class FilterConfig:
    score_threshold: float = 0.30
    max_box_area_fraction: float = 0.20
    min_mask_pixels: int = 500
    nms_iou_threshold: float = 0.50

    def __post_init__(self):
        if not (0.0 <= self.score_threshold <= 1.0):
            raise ValidationError(f"score_threshold {self.score_threshold} outside [0, 1]")
        if not (0.0 < self.max_box_area_fraction <= 1.0):
            raise ValidationError(
                f"max_box_area_fraction {self.max_box_area_fraction} outside (0, 1]"
            )
        if int(self.min_mask_pixels) < 0:
            raise ValidationError(f"min_mask_pixels {self.min_mask_pixels} negative")
        object.__setattr__(self, "min_mask_pixels", int(self.min_mask_pixels))
        if not (0.0 <= self.nms_iou_threshold <= 1.0):
            raise ValidationError(f"nms_iou_threshold {self.nms_iou_threshold} outside [0, 1]")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "FilterConfig":
        """Build a config from file/CLI key-value pairs; unknown keys are rejected."""
        fields = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - fields
        if unknown:
            raise ValidationError(f"unknown filter config keys {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class StageReport:
    """Counts and removed ids for one filter stage."""

    name: str
    input_count: int
    removed_ids: tuple[str, ...]

    @property
    def removed(self) -> int:
        return len(self.removed_ids)

    @property
    def surviving(self) -> int:
        return self.input_count - self.removed


@dataclass(frozen=True)
class FilterReport:
    """Per-stage audit of one filter-chain application."""

    stages: tuple[StageReport, ...]

    def __post_init__(self):
        for prev, nxt in zip(self.stages, self.stages[1:]):
            if nxt.input_count != prev.surviving:
                raise ValidationError(
                    f"stage {nxt.name!r} input {nxt.input_count} != "
                    f"stage {prev.name!r} surviving {prev.surviving}"
                )

    @property
    def input_count(self) -> int:
        return self.stages[0].input_count if self.stages else 0

    @property
    def surviving(self) -> int:
        return self.stages[-1].surviving if self.stages else 0

    @property
    def removed_total(self) -> int:
        return sum(s.removed for s in self.stages)

    def to_dict(self) -> dict[str, Any]:
        return {
            "stages": [
                {
                    "name": s.name,
                    "input": s.input_count,
                    "removed": s.removed,
                    "surviving": s.surviving,
                    "removed_ids": list(s.removed_ids),
                }
                for s in self.stages
            ],
            "input": self.input_count,
            "surviving": self.surviving,
        }


def sum_reports(reports: Iterable[FilterReport]) -> dict[str, Any]:
    """Merge per-image reports into aggregate per-stage counts."""
    totals = {name: {"input": 0, "removed": 0, "surviving": 0} for name in STAGE_NAMES}
    n_input = n_surviving = 0
    for report in reports:
        for stage in report.stages:
            agg = totals[stage.name]
            agg["input"] += stage.input_count
            agg["removed"] += stage.removed
            agg["surviving"] += stage.surviving
        n_input += report.input_count
        n_surviving += report.surviving
    return {"stages": totals, "input": n_input, "surviving": n_surviving}


def filter_confidence(dset: DetectionSet, threshold: float) -> DetectionSet:
    """Keep detections with score >= threshold (inclusive), order preserved."""
    return dset.replace_detections(d for d in dset.detections if d.score >= threshold)


def filter_box_size(dset: DetectionSet, max_area_fraction: float) -> DetectionSet:
    """Keep detections whose box area is strictly below the image-area fraction."""
    limit = max_area_fraction * dset.image_width * dset.image_height
    return dset.replace_detections(d for d in dset.detections if d.box.area < limit)


def filter_mask_area(dset: DetectionSet, min_pixels: int) -> DetectionSet:
    """Drop masked detections covering fewer than min_pixels; maskless ones pass."""
    return dset.replace_detections(
        d for d in dset.detections if d.mask is None or d.mask.pixel_count >= min_pixels
    )


def nms(dset: DetectionSet, iou_threshold: float) -> DetectionSet:
    """Greedy class-agnostic non-maximum suppression.

    Repeatedly selects the highest-score survivor (score ties broken by
    input order) and suppresses every other detection whose box IoU with it
    is strictly above the threshold. Output is sorted by descending score.
    """
    dets = dset.detections
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    suppressed = [False] * len(dets)
    kept: list[int] = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        kept.append(i)
        for j in order[pos + 1 :]:
            if not suppressed[j] and iou(dets[i].box, dets[j].box) > iou_threshold:
                suppressed[j] = True
    return dset.replace_detections(dets[i] for i in kept)


def apply_filter_chain(dset: DetectionSet, cfg: FilterConfig) -> tuple[DetectionSet, FilterReport]:
    """Run score -> size -> mask-area -> NMS and report removals per stage."""
    stages = []
    current = dset
    steps = (
        ("score", lambda s: filter_confidence(s, cfg.score_threshold)),
        ("size", lambda s: filter_box_size(s, cfg.max_box_area_fraction)),
        ("mask_area", lambda s: filter_mask_area(s, cfg.min_mask_pixels)),
        ("nms", lambda s: nms(s, cfg.nms_iou_threshold)),
    )
    for name, step in steps:
        nxt = step(current)
        survivors = {d.det_id for d in nxt.detections}
        removed = tuple(d.det_id for d in current.detections if d.det_id not in survivors)
        stages.append(StageReport(name, len(current.detections), removed))
        current = nxt
    return current, FilterReport(tuple(stages))
