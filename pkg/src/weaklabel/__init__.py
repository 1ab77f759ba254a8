"""weaklabel: zero-shot detector outputs -> filtered weak-supervision labels.

The package covers the annotation pipeline around the neural models (which
stay behind the interchange file format): heuristic filtering of raw
detections, YOLO label generation, group-aware dataset splitting, the full
detection/classification metric suite, and a seeded simulator with
brute-force oracles for end-to-end testing.
"""

from .core import (
    BBox,
    BitMask,
    Detection,
    DetectionSet,
    RleMask,
    parse_detection_file,
    rle_decode,
    rle_encode,
    write_detection_file,
)
from .errors import (
    CodecError,
    InfeasibleSplitError,
    ParseError,
    SplitConvergenceError,
    UndefinedMetricError,
    ValidationError,
    WeaklabelError,
)
from .filters import (
    FilterConfig,
    FilterReport,
    apply_filter_chain,
    filter_box_size,
    filter_confidence,
    filter_mask_area,
    nms,
)
from .labelgen import (
    LabelGenConfig,
    LabelSetTriple,
    Polygon,
    generate_label_sets,
    mask_to_bbox,
    mask_to_polygon,
    parse_yolo_label_file,
    to_yolo_detection_line,
    to_yolo_segmentation_line,
)
from .metrics import (
    EvalReport,
    Matching,
    PrCurve,
    RocCurve,
    average_precision_101,
    binary_pr_ap,
    coco_map,
    evaluate_detections,
    image_score,
    iou,
    match_detections,
    mean_average_recall,
    mean_matched_iou,
    roc_auc,
)
from .oracles import oracle_auc, oracle_map, oracle_mar, oracle_nms
from .simulate import NoiseModel, SceneSpec, generate_scene, perturb_to_detections, write_scene
from .splitter import (
    DatasetManifest,
    ManifestEntry,
    SplitAssignment,
    SplitSpec,
    SplitViolation,
    build_groups,
    read_manifest,
    split_dataset,
    verify_split,
    write_manifest,
)

__version__ = "0.1.0"
