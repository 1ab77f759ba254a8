"""Detection and segmentation stages over directories of images.

Each stage writes one interchange document per image. The detector stage
records boxes, scores and the verbatim prompt with source="detector"; the
segmentation stage re-reads those files, attaches one run-length mask per
retained box (boxes untouched) and marks the records source="segmenter".
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .backends import DEFAULT_DETECTOR_MODEL, DEFAULT_SEGMENTER_MODEL
from .interchange import DetectionRecord, ImageDocument, encode_mask, load_document, render_document

log = logging.getLogger("zsadapter")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass
class AdapterConfig:
    prompt: str
    out_dir: Path
    detector_model: str = DEFAULT_DETECTOR_MODEL
    segmenter_model: str = DEFAULT_SEGMENTER_MODEL
    device: str = "cpu"
    batch_size: int = 1

    def __post_init__(self):
        if not self.prompt.strip():
            raise ValueError("prompt must be non-empty")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.out_dir = Path(self.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)


def find_images(images_dir: str | Path) -> list[Path]:
    images_dir = Path(images_dir)
    if not images_dir.is_dir():
        raise FileNotFoundError(f"{images_dir} is not a directory")
    return sorted(
        p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )


def load_grayscale(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L"))


def run_detector(images: list[Path], backend, cfg: AdapterConfig) -> list[Path]:
    """Detect on every image; one schema-valid document per image.

    Per-image inference failures are logged and the image skipped; the
    remaining files are still written.
    """
    written = []
    for path in images:
        try:
            image = load_grayscale(path)
            detections = backend.detect(image, cfg.prompt)
        except Exception:
            log.exception("inference failed for %s; skipped", path.name)
            continue
        doc = ImageDocument(
            image_id=path.stem,
            width=image.shape[1],
            height=image.shape[0],
            detections=[
                DetectionRecord(
                    det_id=f"d{i:04d}",
                    box=box,
                    score=score,
                    class_id=0,
                    prompt=cfg.prompt,
                    source="detector",
                )
                for i, (box, score) in enumerate(detections)
            ],
        )
        out_path = cfg.out_dir / f"{path.stem}.json"
        out_path.write_bytes(render_document(doc))
        written.append(out_path)
        log.info("%s: %d detections", path.stem, len(doc.detections))
    return written


def run_segmenter(
    detection_files: list[Path], images_dir: str | Path, backend, cfg: AdapterConfig
) -> list[Path]:
    """Attach one mask per box to existing detector documents."""
    images_dir = Path(images_dir)
    by_stem = {p.stem: p for p in find_images(images_dir)}
    written = []
    for det_path in detection_files:
        doc = load_document(det_path.read_bytes())
        image_path = by_stem.get(doc.image_id)
        if image_path is None:
            log.warning("no image found for %s; skipped", doc.image_id)
            continue
        try:
            if doc.detections:
                image = load_grayscale(image_path)
                masks = backend.segment(image, [d.box for d in doc.detections])
                for record, mask in zip(doc.detections, masks):
                    record.mask_counts = encode_mask(mask)
                    record.source = "segmenter"
        except Exception:
            log.exception("segmentation failed for %s; skipped", doc.image_id)
            continue
        out_path = Path(cfg.out_dir) / f"{doc.image_id}.json"
        out_path.write_bytes(render_document(doc))
        written.append(out_path)
    return written
