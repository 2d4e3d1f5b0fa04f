"""Anchor optimisation, layout-based row refinement and per-document evaluation
for table structure recognition."""

from .anchors import (
    AnchorKMeans,
    AnchorSet,
    AnchorSpec,
    KMeansParams,
    decompose_anchor,
    extract_shape_samples,
    generate_traditional_anchors,
    kmeans_optimize,
    mean_best_iou,
)
from .evaluation import EvalConfig, evaluate_dataset, evaluate_document, f_measure, match_detections
from .geometry import Box, Shape, clip_box, iou, shape_distance, shape_iou
from .ingest import (
    BoxClass,
    Dataset,
    Detection,
    GrayImage,
    PageRecord,
    apply_resize_policy,
    load_gray_image,
    parse_detections_jsonl,
    parse_jsonl,
    parse_voc_xml,
)
from .refine import RefineMode, RefineParams, binarize, refine_detections, refine_row_box
from .synth import PerturbSpec, TableLayoutSpec, generate_page, perturb_detections

__version__ = "0.1.0"

__all__ = [
    "AnchorKMeans", "AnchorSet", "AnchorSpec", "KMeansParams", "decompose_anchor", "extract_shape_samples",
    "generate_traditional_anchors", "kmeans_optimize", "mean_best_iou",
    "EvalConfig", "evaluate_dataset", "evaluate_document", "f_measure", "match_detections",
    "Box", "Shape", "clip_box", "iou", "shape_distance", "shape_iou",
    "BoxClass", "Dataset", "Detection", "GrayImage", "PageRecord", "apply_resize_policy", "load_gray_image",
    "parse_detections_jsonl", "parse_jsonl", "parse_voc_xml",
    "RefineMode", "RefineParams", "binarize", "refine_detections", "refine_row_box",
    "PerturbSpec", "TableLayoutSpec", "generate_page", "perturb_detections",
]
