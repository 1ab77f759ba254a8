"""Independent brute-force reference implementations for metamorphic tests.

These deliberately share no matching, sorting or IoU code with the
production paths in :mod:`weaklabel.metrics` and :mod:`weaklabel.filters`:
selection is done by repeated linear scans and interpolation by direct grid
evaluation. They are only valid on small instances (documented limits) and
exist so production results can be cross-checked, both in tests and from
the CLI.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .core import BBox, DetectionSet
from .errors import ValidationError

ORACLE_MAX_BOXES_PER_IMAGE = 6
ORACLE_MAX_IMAGES = 5
ORACLE_MAX_SCORES = 200

_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


def _overlap(a: BBox, b: BBox) -> float:
    # independent IoU arithmetic (max/min instead of interval clamping)
    left = a.x_min if a.x_min > b.x_min else b.x_min
    right = a.x_max if a.x_max < b.x_max else b.x_max
    top = a.y_min if a.y_min > b.y_min else b.y_min
    bottom = a.y_max if a.y_max < b.y_max else b.y_max
    if right <= left or bottom <= top:
        return 0.0
    inter = (right - left) * (bottom - top)
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    return inter / (area_a + area_b - inter)


def oracle_nms(dset: DetectionSet, iou_threshold: float) -> tuple[str, ...]:
    """Quadratic pairwise NMS; returns kept det_ids in selection order."""
    dets = dset.detections
    if len(dets) > ORACLE_MAX_BOXES_PER_IMAGE:
        raise ValidationError(
            f"oracle_nms limited to {ORACLE_MAX_BOXES_PER_IMAGE} boxes, got {len(dets)}"
        )
    state = ["open"] * len(dets)  # open | kept | suppressed
    kept: list[str] = []
    while True:
        best = -1
        for i, d in enumerate(dets):
            if state[i] != "open":
                continue
            if best < 0 or d.score > dets[best].score:
                best = i
        if best < 0:
            break
        state[best] = "kept"
        kept.append(dets[best].det_id)
        for j, d in enumerate(dets):
            if state[j] == "open" and _overlap(dets[best].box, d.box) > iou_threshold:
                state[j] = "suppressed"
    return tuple(kept)


def _check_eval_limits(
    preds: Mapping[str, Sequence[tuple[BBox, float]]], gts: Mapping[str, Sequence[BBox]]
) -> list[str]:
    if set(preds) != set(gts):
        raise ValidationError("oracle: prediction/ground-truth image ids differ")
    if len(preds) > ORACLE_MAX_IMAGES:
        raise ValidationError(f"oracle limited to {ORACLE_MAX_IMAGES} images")
    for image_id in preds:
        if len(preds[image_id]) > ORACLE_MAX_BOXES_PER_IMAGE:
            raise ValidationError(
                f"oracle limited to {ORACLE_MAX_BOXES_PER_IMAGE} boxes per image"
            )
        if len(gts[image_id]) > ORACLE_MAX_BOXES_PER_IMAGE:
            raise ValidationError(
                f"oracle limited to {ORACLE_MAX_BOXES_PER_IMAGE} boxes per image"
            )
    # image order by repeated minimum scan, avoiding sorted()
    order = []
    pool = set(preds)
    while pool:
        low = None
        for image_id in pool:
            if low is None or image_id < low:
                low = image_id
        order.append(low)
        pool.remove(low)
    return order


def _naive_match_flags(
    preds: Sequence[tuple[BBox, float]], gts: Sequence[BBox], threshold: float
) -> list[bool]:
    """True/false-positive flag per prediction (input order), greedy by score."""
    n = len(preds)
    processed = [False] * n
    gt_taken = [False] * len(gts)
    flags = [False] * n
    for _ in range(n):
        pick = -1
        for i in range(n):
            if processed[i]:
                continue
            if pick < 0 or preds[i][1] > preds[pick][1]:
                pick = i
        processed[pick] = True
        best_g = -1
        best_v = 0.0
        for g in range(len(gts)):
            if gt_taken[g]:
                continue
            v = _overlap(preds[pick][0], gts[g])
            if v > best_v:
                best_v = v
                best_g = g
        if best_g >= 0 and best_v >= threshold:
            gt_taken[best_g] = True
            flags[pick] = True
    return flags


def _naive_ap(
    preds: Mapping[str, Sequence[tuple[BBox, float]]],
    gts: Mapping[str, Sequence[BBox]],
    order: Sequence[str],
    threshold: float,
    total_gt: int,
) -> float:
    flags_by_image = {
        image_id: _naive_match_flags(preds[image_id], gts[image_id], threshold)
        for image_id in order
    }
    # global rank by repeated max scan over (score, image order, index)
    entries = [
        (image_id, i) for image_id in order for i in range(len(preds[image_id]))
    ]
    ranked = []
    used = [False] * len(entries)
    img_rank = {image_id: r for r, image_id in enumerate(order)}
    for _ in range(len(entries)):
        pick = -1
        for e, (image_id, i) in enumerate(entries):
            if used[e]:
                continue
            if pick < 0:
                pick = e
                continue
            p_img, p_i = entries[pick]
            better = preds[image_id][i][1] > preds[p_img][p_i][1] or (
                preds[image_id][i][1] == preds[p_img][p_i][1]
                and (img_rank[image_id], i) < (img_rank[p_img], p_i)
            )
            if better:
                pick = e
        used[pick] = True
        ranked.append(entries[pick])
    recalls = []
    precisions = []
    tp = 0
    for rank, (image_id, i) in enumerate(ranked, start=1):
        if flags_by_image[image_id][i]:
            tp += 1
        recalls.append(tp / total_gt)
        precisions.append(tp / rank)
    total = 0.0
    for k in range(101):
        r = k / 100
        best = 0.0
        for rec, prec in zip(recalls, precisions):
            if rec >= r and prec > best:
                best = prec
        total += best
    return total / 101


def oracle_map(
    preds: Mapping[str, Sequence[tuple[BBox, float]]], gts: Mapping[str, Sequence[BBox]]
) -> tuple[float, float, float]:
    """Reference (mAP, mAP@50, mAP@75) by per-threshold recomputation."""
    order = _check_eval_limits(preds, gts)
    total_gt = sum(len(gts[i]) for i in order)
    if total_gt == 0:
        raise ValidationError("oracle_map needs at least one ground truth")
    aps = {t: _naive_ap(preds, gts, order, t, total_gt) for t in _THRESHOLDS}
    return sum(aps.values()) / len(aps), aps[0.5], aps[0.75]


def oracle_mar(
    preds: Mapping[str, Sequence[tuple[BBox, float]]],
    gts: Mapping[str, Sequence[BBox]],
    k: int,
) -> float:
    """Reference mAR@k by per-threshold recall recomputation."""
    order = _check_eval_limits(preds, gts)
    total_gt = sum(len(gts[i]) for i in order)
    if total_gt == 0:
        raise ValidationError("oracle_mar needs at least one ground truth")
    truncated = {}
    for image_id in order:
        items = list(preds[image_id])
        chosen: list[int] = []
        while len(chosen) < k and len(chosen) < len(items):
            pick = -1
            for i in range(len(items)):
                if i in chosen:
                    continue
                if pick < 0 or items[i][1] > items[pick][1]:
                    pick = i
            chosen.append(pick)
        truncated[image_id] = [items[i] for i in range(len(items)) if i in chosen]
    total = 0.0
    for t in _THRESHOLDS:
        matched = 0
        for image_id in order:
            matched += sum(_naive_match_flags(truncated[image_id], gts[image_id], t))
        total += matched / total_gt
    return total / len(_THRESHOLDS)


def oracle_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Exhaustive pairwise ranking probability, ties counted one half."""
    if len(scores) > ORACLE_MAX_SCORES:
        raise ValidationError(f"oracle_auc limited to {ORACLE_MAX_SCORES} scores")
    if len(scores) != len(labels):
        raise ValidationError("scores and labels must have equal length")
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    if not pos or not neg:
        raise ValidationError("oracle_auc needs both positive and negative labels")
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))
