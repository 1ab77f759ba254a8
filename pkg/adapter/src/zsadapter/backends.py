"""Model backends: real zero-shot models via transformers, or a stub.

The stub backend detects bright blobs with plain thresholding; it exists so
the adapter's file contract can be exercised without downloading model
weights (and doubles as a smoke detector on synthetic images). Both
backends speak the same minimal protocol:

    detect(image: np.ndarray, prompt: str) -> list[(box, score)]
    segment(image: np.ndarray, boxes: list[box]) -> list[np.ndarray bool]

with boxes in (x_min, y_min, x_max, y_max) pixel coordinates.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DETECTOR_MODEL = "IDEA-Research/grounding-dino-tiny"
DEFAULT_SEGMENTER_MODEL = "facebook/sam-vit-base"

Box = tuple[float, float, float, float]


class BackendError(RuntimeError):
    """Raised when a backend cannot be constructed (e.g. model load failure)."""


class StubBackend:
    """Deterministic brightness-blob detector and box-fill segmenter."""

    def __init__(self, threshold_sigma: float = 1.0, min_pixels: int = 9):
        self.threshold_sigma = threshold_sigma
        self.min_pixels = min_pixels

    def _threshold(self, image: np.ndarray) -> np.ndarray:
        gray = image.astype(np.float64)
        cut = gray.mean() + self.threshold_sigma * gray.std()
        return gray > cut

    def detect(self, image: np.ndarray, prompt: str) -> list[tuple[Box, float]]:
        from scipy import ndimage

        binary = self._threshold(image)
        if not binary.any():
            return []
        labels, n = ndimage.label(binary)
        gray = image.astype(np.float64)
        lo, hi = gray.min(), gray.max()
        span = (hi - lo) or 1.0
        results = []
        for lab in range(1, n + 1):
            rows, cols = np.nonzero(labels == lab)
            if rows.size < self.min_pixels:
                continue
            box = (float(cols.min()), float(rows.min()),
                   float(cols.max() + 1), float(rows.max() + 1))
            # contrast of the blob against the image, squashed into (0, 1)
            contrast = (gray[rows, cols].mean() - lo) / span
            score = float(np.clip(0.05 + 0.9 * contrast, 0.0, 0.99))
            results.append((box, score))
        results.sort(key=lambda r: (-r[1], r[0]))
        return results

    def segment(self, image: np.ndarray, boxes: list[Box]) -> list[np.ndarray]:
        binary = self._threshold(image)
        masks = []
        for x0, y0, x1, y1 in boxes:
            mask = np.zeros(image.shape, dtype=bool)
            r0, r1 = max(int(y0), 0), min(int(np.ceil(y1)), image.shape[0])
            c0, c1 = max(int(x0), 0), min(int(np.ceil(x1)), image.shape[1])
            window = binary[r0:r1, c0:c1]
            if window.any():
                mask[r0:r1, c0:c1] = window
            else:
                mask[r0:r1, c0:c1] = True  # fall back to the full box
            masks.append(mask)
        return masks


class TransformersBackend:
    """Grounded open-vocabulary detection plus promptable segmentation via
    the transformers model hub. Heavy imports happen lazily; any failure to
    load a model surfaces as BackendError."""

    def __init__(
        self,
        detector_model: str = DEFAULT_DETECTOR_MODEL,
        segmenter_model: str = DEFAULT_SEGMENTER_MODEL,
        device: str = "cpu",
        box_threshold: float = 0.25,
        text_threshold: float = 0.25,
    ):
        self.device = device
        self.box_threshold = box_threshold
        self.text_threshold = text_threshold
        try:
            import torch  # noqa: F401
            from transformers import (
                AutoModelForZeroShotObjectDetection,
                AutoProcessor,
                SamModel,
                SamProcessor,
            )
        except ImportError as e:
            raise BackendError(f"transformers backend unavailable: {e}") from e
        try:
            self._det_processor = AutoProcessor.from_pretrained(detector_model)
            self._detector = AutoModelForZeroShotObjectDetection.from_pretrained(
                detector_model
            ).to(device).eval()
            self._sam_processor = SamProcessor.from_pretrained(segmenter_model)
            self._segmenter = SamModel.from_pretrained(segmenter_model).to(device).eval()
        except Exception as e:
            raise BackendError(f"model load failed: {e}") from e

    @staticmethod
    def _to_rgb(image: np.ndarray) -> np.ndarray:
        if image.ndim == 2:
            return np.stack([image] * 3, axis=-1)
        return image

    def detect(self, image: np.ndarray, prompt: str) -> list[tuple[Box, float]]:
        import torch

        rgb = self._to_rgb(image)
        text = prompt.strip().lower().rstrip(".") + "."
        inputs = self._det_processor(images=rgb, text=text, return_tensors="pt").to(self.device)
        with torch.no_grad():
            outputs = self._detector(**inputs)
        (result,) = self._det_processor.post_process_grounded_object_detection(
            outputs,
            inputs.input_ids,
            threshold=self.box_threshold,
            text_threshold=self.text_threshold,
            target_sizes=[rgb.shape[:2]],
        )
        detections = []
        for box, score in zip(result["boxes"].tolist(), result["scores"].tolist()):
            x0, y0, x1, y1 = (float(v) for v in box)
            x0, x1 = sorted((max(x0, 0.0), min(x1, rgb.shape[1])))
            y0, y1 = sorted((max(y0, 0.0), min(y1, rgb.shape[0])))
            if x1 > x0 and y1 > y0:
                detections.append(((x0, y0, x1, y1), float(np.clip(score, 0.0, 1.0))))
        detections.sort(key=lambda r: (-r[1], r[0]))
        return detections

    def segment(self, image: np.ndarray, boxes: list[Box]) -> list[np.ndarray]:
        import torch

        if not boxes:
            return []
        rgb = self._to_rgb(image)
        inputs = self._sam_processor(
            rgb, input_boxes=[[list(b) for b in boxes]], return_tensors="pt"
        ).to(self.device)
        with torch.no_grad():
            outputs = self._segmenter(**inputs, multimask_output=False)
        (masks,) = self._sam_processor.image_processor.post_process_masks(
            outputs.pred_masks.cpu(),
            inputs["original_sizes"].cpu(),
            inputs["reshaped_input_sizes"].cpu(),
        )
        return [np.asarray(m[0].numpy(), dtype=bool) for m in masks]


def make_backend(name: str, **kwargs):
    if name == "stub":
        return StubBackend()
    if name == "transformers":
        return TransformersBackend(**kwargs)
    raise BackendError(f"unknown backend {name!r} (expected 'transformers' or 'stub')")
