"""Writer/reader for the detection interchange format.

This is the adapter's only coupling to the annotation toolkit: the file
format itself. The writer mirrors the canonical form (lexicographically
sorted keys, floats with 6 decimals, 2-space indent, trailing newline);
the reader is just lenient enough to reload the adapter's own output for
the segmentation stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


@dataclass
class DetectionRecord:
    det_id: str
    box: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    score: float
    class_id: int
    prompt: str
    source: str
    mask_counts: list[int] | None = None


@dataclass
class ImageDocument:
    image_id: str
    width: int
    height: int
    detections: list[DetectionRecord] = field(default_factory=list)


def _emit(value: Any, indent: int) -> str:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_emit(value[k], indent + 1)}' for k in sorted(value)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        if all(isinstance(v, dict) for v in value):
            return "[\n" + ",\n".join(f"{pad}  {_emit(v, indent + 1)}" for v in value) + "\n" + pad + "]"
        return "[" + ", ".join(_emit(v, indent) for v in value) + "]"
    if isinstance(value, float):
        return f"{value:.6f}"
    return json.dumps(value)


def render_document(doc: ImageDocument) -> bytes:
    payload: dict[str, Any] = {
        "image_id": doc.image_id,
        "width": int(doc.width),
        "height": int(doc.height),
        "detections": [
            {
                "det_id": d.det_id,
                "box": [float(v) for v in d.box],
                "score": float(d.score),
                "class_id": int(d.class_id),
                "prompt": d.prompt,
                "source": d.source,
                **(
                    {"mask": {"counts": [int(c) for c in d.mask_counts]}}
                    if d.mask_counts is not None
                    else {}
                ),
            }
            for d in doc.detections
        ],
    }
    return (_emit(payload, 0) + "\n").encode("utf-8")


def load_document(data: bytes) -> ImageDocument:
    raw = json.loads(data.decode("utf-8"))
    detections = [
        DetectionRecord(
            det_id=d["det_id"],
            box=tuple(d["box"]),
            score=d["score"],
            class_id=d["class_id"],
            prompt=d["prompt"],
            source=d["source"],
            mask_counts=d.get("mask", {}).get("counts") if "mask" in d else None,
        )
        for d in raw["detections"]
    ]
    return ImageDocument(raw["image_id"], raw["width"], raw["height"], detections)


def encode_mask(mask) -> list[int]:
    """Row-major run lengths, first run counting zeros (may be 0)."""
    import numpy as np

    flat = np.asarray(mask, dtype=bool).ravel()
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], boundaries, [flat.size]))
    counts = np.diff(starts).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return counts
