"""Detection and image-level evaluation metrics.

Localization follows the COCO conventions: greedy IoU matching, 101-point
interpolated average precision averaged over the IoU threshold grid
0.50:0.05:0.95, and average recall at a per-image prediction budget.
Image-level classification uses ROC/AUC (trapezoidal, ties count half) and
a step-wise average precision over the descending-score sweep.

Undefined metrics (no ground truths, single-class labels, no matches) raise
UndefinedMetricError instead of returning a degenerate 0.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from .core import BBox, DetectionSet
from .errors import UndefinedMetricError, ValidationError

# Decimal-rounded grid so exact-ratio IoUs (e.g. 75/125 = 0.6) land on the
# 0.60 threshold instead of falling to float accumulation error.
IOU_THRESHOLDS: tuple[float, ...] = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_GRID: tuple[float, ...] = tuple(k / 100 for k in range(101))

ScoredBox = tuple[BBox, float]


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area; 0 when the boxes are disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Matching:
    """Greedy prediction/ground-truth matching at one IoU threshold.

    ``pairs`` holds (prediction index, ground-truth index, iou) in match
    order; each prediction and each ground truth appears at most once.
    """

    pairs: tuple[tuple[int, int, float], ...]
    unmatched_preds: tuple[int, ...]
    unmatched_gts: tuple[int, ...]
    iou_threshold: float

    def __post_init__(self):
        seen_p = {p for p, _, _ in self.pairs}
        seen_g = {g for _, g, _ in self.pairs}
        if len(seen_p) != len(self.pairs) or len(seen_g) != len(self.pairs):
            raise ValidationError("a prediction or ground truth is matched twice")
        if any(v < self.iou_threshold for _, _, v in self.pairs):
            raise ValidationError("matched pair below the IoU threshold")


@dataclass(frozen=True)
class PrCurve:
    """Precision-recall operating points in sweep order, with their scores."""

    recalls: tuple[float, ...]
    precisions: tuple[float, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.recalls) == len(self.precisions) == len(self.scores)):
            raise ValidationError("PrCurve fields must have equal length")
        if any(r1 > r2 for r1, r2 in zip(self.recalls, self.recalls[1:])):
            raise ValidationError("recall must be non-decreasing along the curve")
        for v in (*self.recalls, *self.precisions):
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"curve value {v} outside [0, 1]")


@dataclass(frozen=True)
class RocCurve:
    """ROC operating points from (0,0) to (1,1), with their thresholds."""

    fprs: tuple[float, ...]
    tprs: tuple[float, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.fprs) == len(self.tprs) == len(self.thresholds)):
            raise ValidationError("RocCurve fields must have equal length")
        pts = list(zip(self.fprs, self.tprs))
        if pts[0] != (0.0, 0.0) or pts[-1] != (1.0, 1.0):
            raise ValidationError("ROC curve must run from (0,0) to (1,1)")
        for (f1, t1), (f2, t2) in zip(pts, pts[1:]):
            if f2 < f1 or t2 < t1:
                raise ValidationError("ROC coordinates must be non-decreasing")


@dataclass(frozen=True)
class EvalReport:
    """Every reported metric plus the curves behind the image-level ones."""

    iou_mean: float
    map: float
    map50: float
    map75: float
    mar1: float
    mar10: float
    auc: float
    ap_binary: float
    roc: RocCurve
    pr_binary: PrCurve
    pr50: PrCurve

    def __post_init__(self):
        for name in ("iou_mean", "map", "map50", "map75", "mar1", "mar10", "auc", "ap_binary"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} = {v} outside [0, 1]")
        if self.map > self.map50 + 1e-12:
            raise ValidationError(f"map {self.map} exceeds map50 {self.map50}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "iou": self.iou_mean,
            "map": self.map,
            "map50": self.map50,
            "map75": self.map75,
            "mar1": self.mar1,
            "mar10": self.mar10,
            "auc": self.auc,
            "ap_binary": self.ap_binary,
        }

    def to_json(self) -> str:
        doc = self.to_dict()
        doc["curves"] = {
            "roc": {
                "fpr": list(self.roc.fprs),
                "tpr": list(self.roc.tprs),
                # the sweep starts above every score; JSON has no Infinity
                "threshold": [t if math.isfinite(t) else None for t in self.roc.thresholds],
            },
            "pr_binary": {
                "recall": list(self.pr_binary.recalls),
                "precision": list(self.pr_binary.precisions),
                "score": list(self.pr_binary.scores),
            },
            "pr50": {
                "recall": list(self.pr50.recalls),
                "precision": list(self.pr50.precisions),
                "score": list(self.pr50.scores),
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        header = ("IoU", "mAP", "mAP@50", "mAP@75", "mAR@1", "mAR@10", "AUC", "AP")
        values = (
            self.iou_mean,
            self.map,
            self.map50,
            self.map75,
            self.mar1,
            self.mar10,
            self.auc,
            self.ap_binary,
        )
        widths = [max(len(h), 6) for h in header]
        head = "  ".join(h.rjust(w) for h, w in zip(header, widths))
        row = "  ".join(f"{v:.3f}".rjust(w) for v, w in zip(values, widths))
        return head + "\n" + row + "\n"


def curve_to_text(xs: Sequence[float], ys: Sequence[float]) -> str:
    """Two-column plain text for plotting."""
    return "".join(f"{x:.6f} {y:.6f}\n" for x, y in zip(xs, ys))


def match_detections(
    preds: Sequence[ScoredBox], gts: Sequence[BBox], iou_threshold: float
) -> Matching:
    """Greedy matching by descending prediction score.

    Each prediction (ties broken by input order) takes the unmatched ground
    truth with the highest IoU when that IoU is >= the threshold; IoU ties
    go to the lowest ground-truth index.
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i][1], i))
    taken = [False] * len(gts)
    pairs = []
    unmatched_preds = []
    for i in order:
        box = preds[i][0]
        best_g = -1
        best_iou = 0.0
        for g, gt in enumerate(gts):
            if taken[g]:
                continue
            v = iou(box, gt)
            if v > best_iou:
                best_iou = v
                best_g = g
        if best_g >= 0 and best_iou >= iou_threshold:
            taken[best_g] = True
            pairs.append((i, best_g, best_iou))
        else:
            unmatched_preds.append(i)
    unmatched_gts = tuple(g for g, t in enumerate(taken) if not t)
    return Matching(tuple(pairs), tuple(sorted(unmatched_preds)), unmatched_gts, iou_threshold)


def average_precision_101(pr: PrCurve) -> float:
    """COCO 101-point interpolated AP: mean over the recall grid of the
    maximum precision among points at or beyond each recall level."""
    if not pr.recalls:
        return 0.0
    n = len(pr.recalls)
    interp = [0.0] * n
    running = 0.0
    for i in range(n - 1, -1, -1):
        running = max(running, pr.precisions[i])
        interp[i] = running
    total = 0.0
    for r in RECALL_GRID:
        i = bisect_left(pr.recalls, r)
        if i < n:
            total += interp[i]
    return total / len(RECALL_GRID)


def _check_consistent_ids(
    preds: Mapping[str, Sequence[ScoredBox]], gts: Mapping[str, Sequence[BBox]]
) -> list[str]:
    if set(preds) != set(gts):
        diff = sorted(set(preds) ^ set(gts))
        raise ValidationError(f"prediction/ground-truth image ids differ: {diff}")
    return sorted(preds)


def _pooled_order(
    preds: Mapping[str, Sequence[ScoredBox]], image_ids: Sequence[str]
) -> list[tuple[str, int, float]]:
    pooled = [
        (image_id, i, preds[image_id][i][1])
        for image_id in image_ids
        for i in range(len(preds[image_id]))
    ]
    pooled.sort(key=lambda t: (-t[2], t[0], t[1]))
    return pooled


def _pr_curve_at(
    preds: Mapping[str, Sequence[ScoredBox]],
    gts: Mapping[str, Sequence[BBox]],
    image_ids: Sequence[str],
    pooled: Sequence[tuple[str, int, float]],
    threshold: float,
    total_gt: int,
) -> PrCurve:
    matched: dict[str, set[int]] = {}
    for image_id in image_ids:
        m = match_detections(preds[image_id], gts[image_id], threshold)
        matched[image_id] = {p for p, _, _ in m.pairs}
    recalls, precisions, scores = [], [], []
    tp = 0
    for rank, (image_id, i, score) in enumerate(pooled, start=1):
        if i in matched[image_id]:
            tp += 1
        recalls.append(tp / total_gt)
        precisions.append(tp / rank)
        scores.append(score)
    return PrCurve(tuple(recalls), tuple(precisions), tuple(scores))


def coco_map(
    preds: Mapping[str, Sequence[ScoredBox]], gts: Mapping[str, Sequence[BBox]]
) -> tuple[float, float, float]:
    """(mAP@[.50:.95], mAP@50, mAP@75) for a single class.

    Predictions are pooled across images and sorted by descending score
    (ties: image id, then input order); TP/FP flags come from per-image
    greedy matching at each threshold; recall is denominated by the total
    ground-truth count.
    """
    image_ids = _check_consistent_ids(preds, gts)
    total_gt = sum(len(gts[i]) for i in image_ids)
    if total_gt == 0:
        raise UndefinedMetricError("mAP undefined: no ground-truth boxes")
    pooled = _pooled_order(preds, image_ids)
    aps = {}
    for t in IOU_THRESHOLDS:
        curve = _pr_curve_at(preds, gts, image_ids, pooled, t, total_gt)
        aps[t] = average_precision_101(curve)
    overall = sum(aps.values()) / len(aps)
    return overall, aps[0.5], aps[0.75]


def detection_pr_curve(
    preds: Mapping[str, Sequence[ScoredBox]],
    gts: Mapping[str, Sequence[BBox]],
    threshold: float = 0.5,
) -> PrCurve:
    """Pooled PR curve of the detector at one IoU threshold."""
    image_ids = _check_consistent_ids(preds, gts)
    total_gt = sum(len(gts[i]) for i in image_ids)
    if total_gt == 0:
        raise UndefinedMetricError("PR curve undefined: no ground-truth boxes")
    pooled = _pooled_order(preds, image_ids)
    return _pr_curve_at(preds, gts, image_ids, pooled, threshold, total_gt)


def mean_average_recall(
    preds: Mapping[str, Sequence[ScoredBox]], gts: Mapping[str, Sequence[BBox]], k: int
) -> float:
    """mAR@k: recall with each image truncated to its top-k predictions,
    averaged over the IoU threshold grid."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    image_ids = _check_consistent_ids(preds, gts)
    total_gt = sum(len(gts[i]) for i in image_ids)
    if total_gt == 0:
        raise UndefinedMetricError("mAR undefined: no ground-truth boxes")
    top_k = {}
    for image_id in image_ids:
        order = sorted(
            range(len(preds[image_id])), key=lambda i: (-preds[image_id][i][1], i)
        )[:k]
        top_k[image_id] = [preds[image_id][i] for i in sorted(order)]
    total = 0.0
    for t in IOU_THRESHOLDS:
        matched = sum(
            len(match_detections(top_k[i], gts[i], t).pairs) for i in image_ids
        )
        total += matched / total_gt
    return total / len(IOU_THRESHOLDS)


def mean_matched_iou(
    preds: Mapping[str, Sequence[ScoredBox]], gts: Mapping[str, Sequence[BBox]]
) -> float:
    """Mean IoU over greedy matches at threshold 0.50, pooled over images."""
    image_ids = _check_consistent_ids(preds, gts)
    values = []
    for image_id in image_ids:
        m = match_detections(preds[image_id], gts[image_id], 0.5)
        values.extend(v for _, _, v in m.pairs)
    if not values:
        raise UndefinedMetricError("matched IoU undefined: no matches at threshold 0.50")
    return sum(values) / len(values)


def image_score(dset: DetectionSet) -> float:
    """Image-level defect score: the maximum detection confidence, 0 if empty."""
    return max((d.score for d in dset.detections), default=0.0)


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> tuple[RocCurve, float]:
    """ROC curve over the distinct-score sweep and its trapezoidal AUC.

    The AUC equals the probability that a random positive outscores a
    random negative, ties counted one half.
    """
    if len(scores) != len(labels):
        raise ValidationError("scores and labels must have equal length")
    n_pos = sum(1 for l in labels if l)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC undefined: needs both positive and negative labels")
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    fprs, tprs, thresholds = [0.0], [0.0], [float("inf")]
    tp = fp = 0
    idx = 0
    while idx < len(order):
        threshold = scores[order[idx]]
        while idx < len(order) and scores[order[idx]] == threshold:
            if labels[order[idx]]:
                tp += 1
            else:
                fp += 1
            idx += 1
        fprs.append(fp / n_neg)
        tprs.append(tp / n_pos)
        thresholds.append(threshold)
    curve = RocCurve(tuple(fprs), tuple(tprs), tuple(thresholds))
    auc = sum(
        (f2 - f1) * (t1 + t2) / 2.0
        for f1, f2, t1, t2 in zip(fprs, fprs[1:], tprs, tprs[1:])
    )
    return curve, auc


def binary_pr_ap(scores: Sequence[float], labels: Sequence[bool]) -> tuple[PrCurve, float]:
    """Precision-recall over the descending-score sweep and its step-wise AP
    (sum of precision weighted by recall increments)."""
    if len(scores) != len(labels):
        raise ValidationError("scores and labels must have equal length")
    n_pos = sum(1 for l in labels if l)
    if n_pos == 0:
        raise UndefinedMetricError("AP undefined: no positive labels")
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    recalls, precisions, sweep = [], [], []
    tp = seen = 0
    idx = 0
    while idx < len(order):
        threshold = scores[order[idx]]
        while idx < len(order) and scores[order[idx]] == threshold:
            if labels[order[idx]]:
                tp += 1
            seen += 1
            idx += 1
        recalls.append(tp / n_pos)
        precisions.append(tp / seen)
        sweep.append(threshold)
    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recalls, precisions):
        ap += (r - prev_r) * p
        prev_r = r
    return PrCurve(tuple(recalls), tuple(precisions), tuple(sweep)), ap


def evaluate_detections(
    preds: Mapping[str, Sequence[ScoredBox]],
    gts: Mapping[str, Sequence[BBox]],
    defective: Mapping[str, bool],
) -> EvalReport:
    """Compute the full report for one prediction set.

    ``defective`` maps every image id to its image-level label (True when
    the image contains at least one real defect).
    """
    image_ids = _check_consistent_ids(preds, gts)
    if set(defective) != set(preds):
        raise ValidationError("defect labels must cover exactly the evaluated images")
    mean_iou = mean_matched_iou(preds, gts)
    overall, map50, map75 = coco_map(preds, gts)
    mar1 = mean_average_recall(preds, gts, 1)
    mar10 = mean_average_recall(preds, gts, 10)
    scores = [max((s for _, s in preds[i]), default=0.0) for i in image_ids]
    labels = [bool(defective[i]) for i in image_ids]
    roc, auc = roc_auc(scores, labels)
    pr_binary, ap_binary = binary_pr_ap(scores, labels)
    pr50 = detection_pr_curve(preds, gts, 0.5)
    return EvalReport(
        iou_mean=mean_iou,
        map=overall,
        map50=map50,
        map75=map75,
        mar1=mar1,
        mar10=mar10,
        auc=auc,
        ap_binary=ap_binary,
        roc=roc,
        pr_binary=pr_binary,
        pr50=pr50,
    )
