"""Synthetic test images: bright elliptical blobs on a noisy background."""

from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def blob_image(rng: np.random.Generator, w=96, h=72, blobs=2) -> np.ndarray:
    img = rng.normal(60, 4, size=(h, w))
    for _ in range(blobs):
        cx, cy = rng.uniform(12, w - 12), rng.uniform(10, h - 10)
        rx, ry = rng.uniform(5, 9), rng.uniform(4, 7)
        yy, xx = np.mgrid[0:h, 0:w]
        inside = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        img[inside] = 220
    return np.clip(img, 0, 255).astype(np.uint8)


@pytest.fixture
def sample_images(tmp_path) -> Path:
    """Five images: four with blobs, one blank."""
    rng = np.random.default_rng(1234)
    images_dir = tmp_path / "images"
    images_dir.mkdir()
    for i in range(4):
        Image.fromarray(blob_image(rng, blobs=1 + i % 3)).save(
            images_dir / f"sample_{i:02d}.png"
        )
    blank = np.full((72, 96), 50, dtype=np.uint8)
    Image.fromarray(blank).save(images_dir / "sample_blank.png")
    return images_dir
