"""Evaluation toolkit for unconstrained salient and camouflaged object detection."""

__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402
from .confusion import ConfusionMatrix3, accumulate, merge  # noqa: E402
from .masks import (  # noqa: E402
    AttributeLabel,
    ScoreMap,
    TernaryMask,
    TernaryProbMap,
    argmax_labels,
    decode_mask,
    encode_mask,
    extract_binary,
    merge_binary_predictions,
)
from .ternary_metrics import class_iou, cscs, miou_macc, ternary_scores  # noqa: E402

__all__ = [
    "BACKEND",
    "AttributeLabel",
    "ConfusionMatrix3",
    "ScoreMap",
    "TernaryMask",
    "TernaryProbMap",
    "accumulate",
    "argmax_labels",
    "class_iou",
    "cscs",
    "decode_mask",
    "encode_mask",
    "extract_binary",
    "merge",
    "merge_binary_predictions",
    "miou_macc",
    "ternary_scores",
]
