"""zsadapter: zero-shot model inference emitting weaklabel interchange files."""

from .adapter import AdapterConfig, find_images, run_detector, run_segmenter
from .backends import BackendError, StubBackend, TransformersBackend, make_backend
from .interchange import DetectionRecord, ImageDocument, load_document, render_document

__version__ = "0.1.0"
