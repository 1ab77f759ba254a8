"""Core domain types, the run-length mask codec, and the detection
interchange file format.

All types are immutable values: every operation in the package returns new
objects, so sets of detections can be processed in parallel without
coordination.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any, Iterable

import numpy as np

from .errors import CodecError, ParseError, ValidationError

SOURCES = ("detector", "segmenter", "derived")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in continuous pixel coordinates, origin top-left.

    The area convention is (x_max - x_min) * (y_max - y_min); a pixel at
    column c, row r occupies the unit square [c, c+1) x [r, r+1).
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"BBox.{name} must be finite and >= 0, got {v!r}")
            object.__setattr__(self, name, v)
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError(
                f"degenerate BBox ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True, eq=False)
class BitMask:
    """Binary pixel grid, row-major, shape (height, width)."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"BitMask dims must be >= 1, got {self.width}x{self.height}")
        arr = np.array(self.data, dtype=bool, copy=True)
        if arr.size != self.width * self.height:
            raise ValidationError(
                f"BitMask data has {arr.size} pixels, expected {self.width * self.height}"
            )
        arr = arr.reshape(self.height, self.width)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def pixel_count(self) -> int:
        return int(self.data.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.data, other.data))
        )


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded binary mask.

    ``counts`` holds alternating run lengths in row-major scan order,
    starting with a run of zeros (which is the only run allowed to be
    empty). This canonical form makes the encoding unique per mask.
    """

    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"RleMask dims must be >= 1, got {self.width}x{self.height}")
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if not counts:
            raise CodecError("RLE counts must not be empty")
        if any(c < 0 for c in counts):
            raise CodecError(f"negative run length in {counts}")
        if any(c == 0 for c in counts[1:]):
            raise CodecError("zero-length interior run (encoding not canonical)")
        total = sum(counts)
        if total != self.width * self.height:
            raise CodecError(
                f"RLE counts sum to {total}, expected {self.width * self.height}"
            )

    @property
    def pixel_count(self) -> int:
        return sum(self.counts[1::2])


def rle_encode(mask: BitMask) -> RleMask:
    """Encode a mask to canonical run lengths (leading zero-run may be 0)."""
    flat = mask.data.ravel()
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], boundaries, [flat.size]))
    counts = np.diff(starts).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return RleMask(mask.width, mask.height, tuple(counts))


def rle_decode(rle: RleMask) -> BitMask:
    """Expand run lengths back to the full binary grid."""
    values = np.resize([False, True], len(rle.counts))
    flat = np.repeat(values, rle.counts)
    return BitMask(rle.width, rle.height, flat.reshape(rle.height, rle.width))


@dataclass(frozen=True)
class Detection:
    """One candidate defect: box, confidence, optional mask, provenance."""

    det_id: str
    box: BBox
    score: float
    class_id: int
    prompt: str
    source: str
    mask: RleMask | None = None

    def __post_init__(self):
        object.__setattr__(self, "det_id", str(self.det_id))
        object.__setattr__(self, "score", float(self.score))
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError(
                f"detection {self.det_id!r}: score {self.score!r} outside [0, 1]"
            )
        if int(self.class_id) < 0:
            raise ValidationError(f"detection {self.det_id!r}: negative class_id")
        object.__setattr__(self, "class_id", int(self.class_id))
        if self.source not in SOURCES:
            raise ValidationError(
                f"detection {self.det_id!r}: source {self.source!r} not in {SOURCES}"
            )

    def with_mask(self, mask: RleMask | None) -> "Detection":
        return replace(self, mask=mask)


@dataclass(frozen=True)
class DetectionSet:
    """All detections for one image plus the image's dimensions."""

    image_id: str
    image_width: int
    image_height: int
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        if int(self.image_width) < 1 or int(self.image_height) < 1:
            raise ValidationError(
                f"image {self.image_id!r}: dims must be positive, got "
                f"{self.image_width}x{self.image_height}"
            )
        object.__setattr__(self, "image_width", int(self.image_width))
        object.__setattr__(self, "image_height", int(self.image_height))
        dets = tuple(self.detections)
        object.__setattr__(self, "detections", dets)
        seen: set[str] = set()
        for d in dets:
            if d.det_id in seen:
                raise ValidationError(f"image {self.image_id!r}: duplicate det_id {d.det_id!r}")
            seen.add(d.det_id)
            if d.mask is not None and (
                d.mask.width != self.image_width or d.mask.height != self.image_height
            ):
                raise ValidationError(
                    f"detection {d.det_id!r}: mask dims {d.mask.width}x{d.mask.height} "
                    f"do not match image dims {self.image_width}x{self.image_height}"
                )

    def replace_detections(self, detections: Iterable[Detection]) -> "DetectionSet":
        return replace(self, detections=tuple(detections))

    def __len__(self) -> int:
        return len(self.detections)


# ---------------------------------------------------------------------------
# Interchange file format
#
# One JSON document per image. The canonical writer sorts keys
# lexicographically, formats every float with exactly 6 decimal places,
# indents with two spaces and ends with a newline, so identical sets always
# produce identical bytes.
# ---------------------------------------------------------------------------

_TOP_KEYS = {"detections", "height", "image_id", "width"}
_DET_KEYS = {"box", "class_id", "det_id", "mask", "prompt", "score", "source"}
_DET_REQUIRED = _DET_KEYS - {"mask"}


def _reject_constant(name: str):
    raise ValueError(f"non-finite JSON constant {name!r}")


def _expect(obj: Any, key: str, kind: type, where: str) -> Any:
    if key not in obj:
        raise ParseError(f"{where}: missing key {key!r}")
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"{where}: key {key!r} must be a number")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"{where}: key {key!r} must be an integer")
        return value
    if not isinstance(value, kind):
        raise ParseError(f"{where}: key {key!r} must be {kind.__name__}")
    return value


def parse_detection_file(data: bytes) -> DetectionSet:
    """Parse one interchange document into a DetectionSet.

    Raises ParseError (with byte offset where available) on malformed
    documents and ValidationError on invariant violations such as a mask
    whose pixel count does not match the image dimensions.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"invalid UTF-8: {e.reason}", offset=e.start) from e
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e.msg}", offset=e.pos) from e
    except ValueError as e:
        raise ParseError(f"malformed JSON: {e}") from e

    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ParseError(f"unknown top-level keys {sorted(unknown)}")

    image_id = _expect(doc, "image_id", str, "document")
    width = _expect(doc, "width", int, "document")
    height = _expect(doc, "height", int, "document")
    raw_dets = _expect(doc, "detections", list, "document")

    detections = []
    for i, entry in enumerate(raw_dets):
        where = f"detections[{i}]"
        if not isinstance(entry, dict):
            raise ParseError(f"{where}: must be an object")
        unknown = set(entry) - _DET_KEYS
        if unknown:
            raise ParseError(f"{where}: unknown keys {sorted(unknown)}")
        missing = _DET_REQUIRED - set(entry)
        if missing:
            raise ParseError(f"{where}: missing keys {sorted(missing)}")
        det_id = _expect(entry, "det_id", str, where)
        box_raw = _expect(entry, "box", list, where)
        if len(box_raw) != 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in box_raw
        ):
            raise ParseError(f"{where}: box must be [x_min, y_min, x_max, y_max]")
        score = _expect(entry, "score", float, where)
        class_id = _expect(entry, "class_id", int, where)
        prompt = _expect(entry, "prompt", str, where)
        source = _expect(entry, "source", str, where)
        mask = None
        if "mask" in entry:
            mask_obj = _expect(entry, "mask", dict, where)
            if set(mask_obj) != {"counts"}:
                raise ParseError(f"{where}: mask must contain exactly the key 'counts'")
            counts = mask_obj["counts"]
            if not isinstance(counts, list) or not all(
                isinstance(c, int) and not isinstance(c, bool) for c in counts
            ):
                raise ParseError(f"{where}: mask counts must be a list of integers")
            try:
                mask = RleMask(width, height, tuple(counts))
            except CodecError as e:
                raise ValidationError(f"detection {det_id!r}: {e}") from e
        detections.append(
            Detection(
                det_id=det_id,
                box=BBox(*box_raw),
                score=score,
                class_id=class_id,
                prompt=prompt,
                source=source,
                mask=mask,
            )
        )
    return DetectionSet(image_id, width, height, tuple(detections))


def _emit(value: Any, indent: int) -> str:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f'{pad}  {json.dumps(k)}: {_emit(value[k], indent + 1)}' for k in sorted(value)
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        if all(isinstance(v, dict) for v in value):
            items = [f"{pad}  {_emit(v, indent + 1)}" for v in value]
            return "[\n" + ",\n".join(items) + "\n" + pad + "]"
        return "[" + ", ".join(_emit(v, indent) for v in value) + "]"
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, bool) or value is None:
        raise ValidationError(f"unsupported value {value!r} in interchange document")
    return json.dumps(value)


def write_detection_file(dset: DetectionSet) -> bytes:
    """Serialize a DetectionSet to its canonical interchange bytes."""
    doc: dict[str, Any] = {
        "image_id": dset.image_id,
        "width": dset.image_width,
        "height": dset.image_height,
        "detections": [
            {
                "det_id": d.det_id,
                "box": [float(v) for v in d.box.as_tuple()],
                "score": float(d.score),
                "class_id": d.class_id,
                "prompt": d.prompt,
                "source": d.source,
                **({"mask": {"counts": list(d.mask.counts)}} if d.mask is not None else {}),
            }
            for d in dset.detections
        ],
    }
    return (_emit(doc, 0) + "\n").encode("utf-8")
