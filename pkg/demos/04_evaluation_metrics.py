#!/usr/bin/env python3
"""The evaluation suite on a tiny worked example, checked against oracles."""

from weaklabel import (
    BBox,
    binary_pr_ap,
    coco_map,
    iou,
    mean_average_recall,
    mean_matched_iou,
    roc_auc,
)
from weaklabel.oracles import oracle_auc, oracle_map

gts = {
    "a": [BBox(10, 10, 50, 50)],
    "b": [BBox(0, 0, 30, 30), BBox(60, 60, 100, 100)],
    "empty": [],
}
preds = {
    "a": [(BBox(12, 10, 52, 50), 0.9)],          # slightly shifted hit
    "b": [(BBox(0, 0, 30, 30), 0.8),             # exact hit
          (BBox(61, 58, 99, 100), 0.7),          # good hit
          (BBox(200, 200, 220, 220), 0.6)],      # false positive
    "empty": [(BBox(5, 5, 25, 25), 0.4)],        # false positive on clean image
}

print("pairwise IoU of the shifted hit:",
      round(iou(preds["a"][0][0], gts["a"][0]), 4))

m, m50, m75 = coco_map(preds, gts)
print(f"mAP@[.50:.95] {m:.4f}   mAP@50 {m50:.4f}   mAP@75 {m75:.4f}")
print(f"mAR@1 {mean_average_recall(preds, gts, 1):.4f}   "
      f"mAR@10 {mean_average_recall(preds, gts, 10):.4f}")
print(f"matched-IoU mean {mean_matched_iou(preds, gts):.4f}")

# image-level classification from max detection score
scores = [max((s for _, s in preds[i]), default=0.0) for i in sorted(preds)]
labels = [bool(gts[i]) for i in sorted(preds)]
_, auc = roc_auc(scores, labels)
_, ap = binary_pr_ap(scores, labels)
print(f"AUC {auc:.4f}   AP {ap:.4f}")

# the naive oracles recompute everything without shared code
assert abs(coco_map(preds, gts)[0] - oracle_map(preds, gts)[0]) < 1e-9
assert abs(auc - oracle_auc(scores, labels)) < 1e-12
print("oracle agreement: ok")
