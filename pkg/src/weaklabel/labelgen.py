"""Label-set derivation and YOLO label file serialization.

One filtered DetectionSet yields three annotation variants per image:
detector boxes, polygonized masks, and tight boxes derived from the same
masks. Masks are polygonized by tracing the pixel-boundary contour of each
4-connected component and simplifying it with Douglas-Peucker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .core import BBox, BitMask, DetectionSet, rle_decode
from .errors import ParseError, ValidationError

Point = tuple[float, float]

LABEL_VARIANTS = ("bbox_detector", "seg_masks", "bbox_from_masks")

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

# directed boundary edges keep the component interior on the right, so outer
# boundaries come out with positive shoelace sum and holes negative
_RIGHT_TURN = {(1, 0): (0, 1), (0, 1): (-1, 0), (-1, 0): (0, -1), (0, -1): (1, 0)}
_LEFT_TURN = {v: k for k, v in _RIGHT_TURN.items()}


@dataclass(frozen=True)
class Polygon:
    """Ordered vertices in continuous pixel coordinates.

    Zero-length edges are collapsed on construction; self-intersection is
    tolerated (contour tracing of pinched masks can produce it).
    """

    vertices: tuple[Point, ...]

    def __post_init__(self):
        verts = [(float(x), float(y)) for x, y in self.vertices]
        collapsed: list[Point] = []
        for v in verts:
            if not collapsed or v != collapsed[-1]:
                collapsed.append(v)
        if len(collapsed) > 1 and collapsed[0] == collapsed[-1]:
            collapsed.pop()
        if len(collapsed) < 3:
            raise ValidationError(f"polygon needs >= 3 distinct vertices, got {collapsed}")
        object.__setattr__(self, "vertices", tuple(collapsed))


@dataclass(frozen=True)
class LabelSetTriple:
    """The three label variants derived from one image's detections."""

    bbox_detector: tuple[tuple[int, BBox], ...]
    seg_masks: tuple[tuple[int, Polygon], ...]
    bbox_from_masks: tuple[tuple[int, BBox], ...]

    def __post_init__(self):
        if len(self.seg_masks) != len(self.bbox_from_masks):
            raise ValidationError(
                f"{len(self.seg_masks)} mask polygons vs "
                f"{len(self.bbox_from_masks)} mask-derived boxes"
            )


@dataclass(frozen=True)
class LabelGenConfig:
    simplify_tolerance: float = 1.0

    def __post_init__(self):
        if self.simplify_tolerance < 0:
            raise ValidationError("simplify_tolerance must be >= 0")


def mask_to_bbox(mask: BitMask) -> BBox:
    """Tight box over the set pixels; pixel (c, r) spans [c, c+1) x [r, r+1)."""
    rows = np.flatnonzero(mask.data.any(axis=1))
    if rows.size == 0:
        raise ValidationError("cannot derive a box from an empty mask")
    cols = np.flatnonzero(mask.data.any(axis=0))
    return BBox(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def _boundary_edges(comp: np.ndarray) -> dict[tuple[int, int], dict[tuple[int, int], tuple[int, int]]]:
    """Directed pixel-edge segments of a component, grouped by start vertex.

    Vertices are lattice points (x, y); each edge maps direction -> end
    vertex. A vertex has at most two outgoing edges (checkerboard pinch).
    """
    padded = np.zeros((comp.shape[0] + 2, comp.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = comp
    inner = padded[1:-1, 1:-1]
    exposed = {
        "top": inner & ~padded[:-2, 1:-1],
        "right": inner & ~padded[1:-1, 2:],
        "bottom": inner & ~padded[2:, 1:-1],
        "left": inner & ~padded[1:-1, :-2],
    }
    out: dict[tuple[int, int], dict[tuple[int, int], tuple[int, int]]] = {}

    def add(start: tuple[int, int], direction: tuple[int, int], end: tuple[int, int]):
        out.setdefault(start, {})[direction] = end

    for r, c in np.argwhere(exposed["top"]):
        add((int(c), int(r)), (1, 0), (int(c) + 1, int(r)))
    for r, c in np.argwhere(exposed["right"]):
        add((int(c) + 1, int(r)), (0, 1), (int(c) + 1, int(r) + 1))
    for r, c in np.argwhere(exposed["bottom"]):
        add((int(c) + 1, int(r) + 1), (-1, 0), (int(c), int(r) + 1))
    for r, c in np.argwhere(exposed["left"]):
        add((int(c), int(r) + 1), (0, -1), (int(c), int(r)))
    return out


def _trace_loops(edges) -> list[list[tuple[int, int]]]:
    """Walk directed edges into closed loops.

    At a two-way (checkerboard) vertex the sharpest right turn wins; that
    pairing is injective, so the edge set partitions into disjoint cycles
    and the outer boundary of a pinched component stays in a single loop.
    """
    loops = []
    remaining = {(start, d) for start, dirs in edges.items() for d in dirs}
    while remaining:
        start_edge = min(remaining)
        vertex, d = start_edge
        loop = []
        while True:
            loop.append(vertex)
            remaining.discard((vertex, d))
            vertex = edges[vertex][d]
            options = edges[vertex]
            for candidate in (_RIGHT_TURN[d], d, _LEFT_TURN[d]):
                if candidate in options:
                    d = candidate
                    break
            else:
                raise AssertionError("boundary walk left an open chain")
            if (vertex, d) == start_edge:
                break
        loops.append(loop)
    return loops


def _shoelace(loop: Sequence[tuple[int, int]]) -> float:
    total = 0.0
    for (x1, y1), (x2, y2) in zip(loop, loop[1:] + [loop[0]]):
        total += x1 * y2 - x2 * y1
    return total / 2.0


def _perp_distance(p: Point, a: Point, b: Point) -> float:
    if a == b:
        return math.hypot(p[0] - a[0], p[1] - a[1])
    cross = abs((b[0] - a[0]) * (a[1] - p[1]) - (a[0] - p[0]) * (b[1] - a[1]))
    return cross / math.hypot(b[0] - a[0], b[1] - a[1])


def _douglas_peucker(points: list[Point], tolerance: float) -> list[Point]:
    """Simplify an open chain, keeping both endpoints.

    Interior points are dropped when their maximum deviation from the chord
    is <= tolerance, so tolerance 0 removes exactly-collinear vertices.
    """
    if len(points) <= 2:
        return list(points)
    stack = [(0, len(points) - 1)]
    keep = [False] * len(points)
    keep[0] = keep[-1] = True
    while stack:
        lo, hi = stack.pop()
        worst = -1.0
        split = -1
        for i in range(lo + 1, hi):
            d = _perp_distance(points[i], points[lo], points[hi])
            if d > worst:
                worst = d
                split = i
        if split >= 0 and worst > tolerance:
            keep[split] = True
            stack.append((lo, split))
            stack.append((split, hi))
    return [p for p, k in zip(points, keep) if k]


def _simplify_ring(ring: list[Point], tolerance: float) -> list[Point]:
    """Douglas-Peucker on a closed ring, anchored at its lexicographic
    minimum vertex and the vertex farthest from it."""
    anchor = min(range(len(ring)), key=lambda i: ring[i])
    ring = ring[anchor:] + ring[:anchor]
    far = max(range(len(ring)), key=lambda i: (
        (ring[i][0] - ring[0][0]) ** 2 + (ring[i][1] - ring[0][1]) ** 2,
        -i,
    ))
    chain_a = _douglas_peucker(ring[: far + 1], tolerance)
    chain_b = _douglas_peucker(ring[far:] + [ring[0]], tolerance)
    simplified = chain_a[:-1] + chain_b[:-1]
    if len(simplified) >= 3:
        return simplified
    # over-simplified: fall back to the triangle with maximum deviation
    third = max(
        range(len(ring)),
        key=lambda i: (_perp_distance(ring[i], ring[0], ring[far]), -i),
    )
    idx = sorted({0, far, third})
    if len(idx) < 3:  # defensive; a closed boundary is never collinear
        raise ValidationError("degenerate boundary ring")
    return [ring[i] for i in idx]


def mask_to_polygon(mask: BitMask, simplify_tolerance: float = 1.0) -> list[Polygon]:
    """One polygon per 4-connected component, largest component first.

    Traces the outer pixel-boundary contour (holes are ignored) and
    simplifies it with the given tolerance. Raises on empty masks.
    """
    if simplify_tolerance < 0:
        raise ValidationError("simplify_tolerance must be >= 0")
    if mask.pixel_count == 0:
        raise ValidationError("cannot polygonize an empty mask")
    labels, n = ndimage.label(mask.data, structure=_FOUR_CONNECTED)
    sizes = np.bincount(labels.ravel())[1:]
    order = sorted(range(1, n + 1), key=lambda lab: (-int(sizes[lab - 1]), lab))
    polygons = []
    for lab in order:
        comp = labels == lab
        loops = _trace_loops(_boundary_edges(comp))
        outer = [lp for lp in loops if _shoelace(lp) > 0]
        ring = max(outer, key=_shoelace)
        points = [(float(x), float(y)) for x, y in ring]
        polygons.append(Polygon(tuple(_simplify_ring(points, simplify_tolerance))))
    return polygons


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def _clamp(v: float, lo: float, hi: float) -> float:
    return min(max(v, lo), hi)


def to_yolo_detection_line(class_id: int, box: BBox, image_dims: tuple[int, int]) -> str:
    """"class cx cy w h", center/size normalized by the image dimensions."""
    w_img, h_img = image_dims
    x0 = _clamp(box.x_min, 0.0, w_img)
    x1 = _clamp(box.x_max, 0.0, w_img)
    y0 = _clamp(box.y_min, 0.0, h_img)
    y1 = _clamp(box.y_max, 0.0, h_img)
    if x1 <= x0 or y1 <= y0:
        raise ValidationError(f"box {box.as_tuple()} has zero area inside a {w_img}x{h_img} image")
    values = (
        _clamp((x0 + x1) / 2 / w_img, 0.0, 1.0),
        _clamp((y0 + y1) / 2 / h_img, 0.0, 1.0),
        _clamp((x1 - x0) / w_img, 0.0, 1.0),
        _clamp((y1 - y0) / h_img, 0.0, 1.0),
    )
    return f"{int(class_id)} " + " ".join(_fmt(v) for v in values)


def to_yolo_segmentation_line(class_id: int, poly: Polygon, image_dims: tuple[int, int]) -> str:
    """"class x1 y1 ... xn yn", vertices normalized and clamped to [0, 1]."""
    if len(poly.vertices) < 3:
        raise ValidationError("segmentation label needs >= 3 vertices")
    w_img, h_img = image_dims
    coords = []
    for x, y in poly.vertices:
        coords.append(_fmt(_clamp(x / w_img, 0.0, 1.0)))
        coords.append(_fmt(_clamp(y / h_img, 0.0, 1.0)))
    return f"{int(class_id)} " + " ".join(coords)


def _parse_class(token: str, line_no: int) -> int:
    try:
        class_id = int(token)
    except ValueError:
        raise ParseError(f"class id {token!r} is not an integer", line=line_no) from None
    if class_id < 0:
        raise ParseError(f"negative class id {class_id}", line=line_no)
    return class_id


def _parse_unit_floats(tokens: Sequence[str], line_no: int) -> list[float]:
    values = []
    for tok in tokens:
        try:
            v = float(tok)
        except ValueError:
            raise ParseError(f"value {tok!r} is not a number", line=line_no) from None
        if not (0.0 <= v <= 1.0):
            raise ParseError(f"value {v} outside [0, 1]", line=line_no)
        values.append(v)
    return values


def parse_yolo_label_file(
    text: str, image_dims: tuple[int, int], kind: str
) -> list[tuple[int, BBox | Polygon]]:
    """Parse a YOLO label file back to pixel coordinates, line order kept.

    ``kind`` is "detection" (5 tokens per line) or "segmentation" (odd token
    count >= 7). Values outside [0, 1] and wrong token counts raise
    ParseError with the line number.
    """
    if kind not in ("detection", "segmentation"):
        raise ValidationError(f"unknown label kind {kind!r}")
    w_img, h_img = image_dims
    entries: list[tuple[int, BBox | Polygon]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        if kind == "detection":
            if len(tokens) != 5:
                raise ParseError(
                    f"detection line has {len(tokens)} tokens, expected 5", line=line_no
                )
            class_id = _parse_class(tokens[0], line_no)
            cx, cy, w, h = _parse_unit_floats(tokens[1:], line_no)
            x0 = _clamp((cx - w / 2) * w_img, 0.0, w_img)
            x1 = _clamp((cx + w / 2) * w_img, 0.0, w_img)
            y0 = _clamp((cy - h / 2) * h_img, 0.0, h_img)
            y1 = _clamp((cy + h / 2) * h_img, 0.0, h_img)
            try:
                entries.append((class_id, BBox(x0, y0, x1, y1)))
            except ValidationError as e:
                raise ParseError(f"degenerate box: {e}", line=line_no) from None
        else:
            if len(tokens) < 7 or len(tokens) % 2 == 0:
                raise ParseError(
                    f"segmentation line has {len(tokens)} tokens, expected odd count >= 7",
                    line=line_no,
                )
            class_id = _parse_class(tokens[0], line_no)
            values = _parse_unit_floats(tokens[1:], line_no)
            vertices = [
                (values[i] * w_img, values[i + 1] * h_img) for i in range(0, len(values), 2)
            ]
            try:
                entries.append((class_id, Polygon(tuple(vertices))))
            except ValidationError as e:
                raise ParseError(f"degenerate polygon: {e}", line=line_no) from None
    return entries


def generate_label_sets(filtered: DetectionSet, cfg: LabelGenConfig | None = None) -> LabelSetTriple:
    """Derive the three label variants from a filtered DetectionSet.

    Detector-sourced detections contribute their boxes; every detection
    carrying a non-empty mask contributes one polygon per component plus the
    tight box of the whole mask (repeated per component so the two mask
    variants stay aligned).
    """
    cfg = cfg or LabelGenConfig()
    bbox_detector = []
    seg_masks = []
    bbox_from_masks = []
    for d in filtered.detections:
        if d.source == "detector":
            bbox_detector.append((d.class_id, d.box))
        if d.mask is not None and d.mask.pixel_count > 0:
            mask = rle_decode(d.mask)
            tight = mask_to_bbox(mask)
            for poly in mask_to_polygon(mask, cfg.simplify_tolerance):
                seg_masks.append((d.class_id, poly))
                bbox_from_masks.append((d.class_id, tight))
    return LabelSetTriple(tuple(bbox_detector), tuple(seg_masks), tuple(bbox_from_masks))


def render_label_file(
    entries: Iterable[tuple[int, BBox | Polygon]], image_dims: tuple[int, int], kind: str
) -> str:
    """Serialize label entries to the canonical file text (LF endings)."""
    lines = []
    for class_id, shape in entries:
        if kind == "detection":
            if not isinstance(shape, BBox):
                raise ValidationError("detection labels need BBox entries")
            lines.append(to_yolo_detection_line(class_id, shape, image_dims))
        elif kind == "segmentation":
            if not isinstance(shape, Polygon):
                raise ValidationError("segmentation labels need Polygon entries")
            lines.append(to_yolo_segmentation_line(class_id, shape, image_dims))
        else:
            raise ValidationError(f"unknown label kind {kind!r}")
    return "".join(line + "\n" for line in lines)


def write_label_tree(
    triple: LabelSetTriple,
    image_id: str,
    image_dims: tuple[int, int],
    out_dir: str | Path,
    split: str = "all",
) -> dict[str, Path]:
    """Write one image's three label files under
    labels/{variant}/{split}/{image_id}.txt and return the paths."""
    out_dir = Path(out_dir)
    contents = {
        "bbox_detector": render_label_file(triple.bbox_detector, image_dims, "detection"),
        "seg_masks": render_label_file(triple.seg_masks, image_dims, "segmentation"),
        "bbox_from_masks": render_label_file(triple.bbox_from_masks, image_dims, "detection"),
    }
    paths = {}
    for variant, text in contents.items():
        path = out_dir / variant / split / f"{image_id}.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
        paths[variant] = path
    return paths
