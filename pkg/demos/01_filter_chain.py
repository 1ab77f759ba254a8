#!/usr/bin/env python3
"""Walk a handful of raw detections through the heuristic filter chain."""

import numpy as np

from weaklabel import (
    BBox,
    BitMask,
    Detection,
    DetectionSet,
    FilterConfig,
    apply_filter_chain,
    rle_encode,
)


def blob_mask(w, h, x0, y0, x1, y1):
    data = np.zeros((h, w), bool)
    data[y0:y1, x0:x1] = True
    return rle_encode(BitMask(w, h, data))


raw = DetectionSet(
    "demo_image",
    640,
    480,
    (
        # solid detection with a decent mask: survives everything
        Detection("keeper", BBox(100, 100, 160, 150), 0.82, 0, "two circles", "detector",
                  mask=blob_mask(640, 480, 105, 105, 155, 145)),
        # near-duplicate of the keeper at lower confidence: NMS food
        Detection("duplicate", BBox(104, 102, 164, 152), 0.55, 0, "two circles", "detector"),
        # streak artifact covering a third of the image: size filter food
        Detection("streak", BBox(0, 0, 640, 160), 0.70, 0, "two circles", "detector"),
        # low-confidence speckle
        Detection("speckle", BBox(300, 300, 310, 308), 0.11, 0, "two circles", "detector"),
        # confident but its mask covers only ~100 pixels
        Detection("thin", BBox(400, 60, 460, 90), 0.66, 0, "two circles", "detector",
                  mask=blob_mask(640, 480, 410, 70, 460, 72)),
    ),
)

cfg = FilterConfig()  # score 0.30, area < 20%, mask >= 500 px, NMS IoU 0.50
surviving, report = apply_filter_chain(raw, cfg)

print(f"input detections : {report.input_count}")
for stage in report.stages:
    removed = ", ".join(stage.removed_ids) or "-"
    print(f"  {stage.name:<10} kept {stage.surviving}  removed: {removed}")
print(f"survivors        : {[d.det_id for d in surviving.detections]}")

# the report always balances: every removed id is accounted for exactly once
assert report.removed_total + len(surviving) == len(raw)
