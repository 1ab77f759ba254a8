"""Shared builders for randomized tests.

Everything takes an explicit rng (numpy Generator) so tests stay
reproducible; hypothesis strategies live next to the tests that use them.
"""

from __future__ import annotations

import numpy as np
import pytest

from weaklabel import BBox, BitMask, Detection, DetectionSet, rle_encode


def random_box(rng: np.random.Generator, span: float = 100.0, min_side: float = 1.0) -> BBox:
    x0 = float(rng.uniform(0, span - min_side))
    y0 = float(rng.uniform(0, span - min_side))
    w = float(rng.uniform(min_side, span - x0))
    h = float(rng.uniform(min_side, span - y0))
    return BBox(x0, y0, x0 + w, y0 + h)


def clustered_box(rng: np.random.Generator, span: float = 40.0) -> BBox:
    """Boxes drawn from a small grid so overlaps and exact ties are common."""
    x0 = float(rng.integers(0, 6)) * 4.0
    y0 = float(rng.integers(0, 6)) * 4.0
    w = float(rng.integers(1, 5)) * 4.0
    h = float(rng.integers(1, 5)) * 4.0
    return BBox(x0, y0, min(x0 + w, span + 20), min(y0 + h, span + 20))


def random_mask(rng: np.random.Generator, max_side: int = 12) -> BitMask:
    w = int(rng.integers(1, max_side + 1))
    h = int(rng.integers(1, max_side + 1))
    density = rng.uniform(0.0, 1.0)
    data = rng.random((h, w)) < density
    return BitMask(w, h, data)


def random_detection_set(
    rng: np.random.Generator,
    *,
    image_id: str = "img",
    max_dets: int = 8,
    with_masks: bool = True,
    tie_scores: bool = False,
) -> DetectionSet:
    w_img, h_img = 120, 120
    n = int(rng.integers(0, max_dets + 1))
    detections = []
    for i in range(n):
        if tie_scores:
            score = float(rng.integers(0, 4)) / 4.0
        else:
            # 6-decimal quantized: the interchange format serializes floats
            # with %.6f, so structural round-trip identity holds on the
            # representable subspace
            score = float(f"{rng.uniform(0, 1):.6f}")
        mask = None
        if with_masks and rng.random() < 0.4:
            data = np.zeros((h_img, w_img), dtype=bool)
            x0, y0 = int(rng.integers(0, 100)), int(rng.integers(0, 100))
            data[y0 : y0 + int(rng.integers(1, 20)), x0 : x0 + int(rng.integers(1, 20))] = True
            mask = rle_encode(BitMask(w_img, h_img, data))
        detections.append(
            Detection(
                det_id=f"d{i:03d}",
                box=clustered_box(rng),
                score=score,
                class_id=0,
                prompt="cells",
                source=("detector", "segmenter", "derived")[int(rng.integers(0, 3))],
                mask=mask,
            )
        )
    return DetectionSet(image_id, w_img, h_img, tuple(detections))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240517)
