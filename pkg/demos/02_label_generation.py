#!/usr/bin/env python3
"""From a binary mask to YOLO segmentation and detection labels."""

import numpy as np

from weaklabel import (
    BitMask,
    mask_to_bbox,
    mask_to_polygon,
    parse_yolo_label_file,
    to_yolo_detection_line,
    to_yolo_segmentation_line,
)

W, H = 64, 48

# an L-shaped defect: the contour tracer follows the pixel boundary exactly
data = np.zeros((H, W), bool)
data[10:30, 12:20] = True
data[22:30, 12:40] = True
mask = BitMask(W, H, data)

tight = mask_to_bbox(mask)
print(f"tight box: {tight.as_tuple()}")

for tol in (0.0, 1.0, 3.0):
    poly = mask_to_polygon(mask, simplify_tolerance=tol)[0]
    print(f"tolerance {tol}: {len(poly.vertices)} vertices -> {poly.vertices}")

poly = mask_to_polygon(mask, simplify_tolerance=0.0)[0]
seg_line = to_yolo_segmentation_line(0, poly, (W, H))
det_line = to_yolo_detection_line(0, tight, (W, H))
print("\nYOLO segmentation line:")
print(" ", seg_line)
print("YOLO detection line:")
print(" ", det_line)

# label files round-trip: parse gives back pixel coordinates
((cls, parsed_box),) = parse_yolo_label_file(det_line, (W, H), "detection")
print(f"\nreparsed box (class {cls}): {parsed_box.as_tuple()}")
