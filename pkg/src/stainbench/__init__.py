"""stainbench: benchmark harness for bloodstain segmentation methods.

Compares classical thresholding pipelines against promptable
segmentation backends over a language-neutral child-process protocol,
with deterministic prompt generation, IoU/Dice scoring, and synthetic
droplet corpora with exact ground truth.
"""

from .imaging import (
    MalformedRunsError,
    RunLengthEncoding,
    adaptive_threshold,
    global_threshold,
    largest_component,
    median_filter,
    otsu_threshold,
    rle_decode,
    rle_encode,
    to_grayscale,
)
from .metrics import EvalRecord, ReportRow, aggregate_accuracy, comparison_table, dice, iou, pass_fail, speedup_percent, timing_stats
from .prompting import AutoGridPrompt, BoxPrompt, PointPrompt, auto_grid, center_point, full_image_box

__version__ = "0.1.0"

__all__ = [
    "MalformedRunsError",
    "RunLengthEncoding",
    "adaptive_threshold",
    "global_threshold",
    "largest_component",
    "median_filter",
    "otsu_threshold",
    "rle_decode",
    "rle_encode",
    "to_grayscale",
    "EvalRecord",
    "ReportRow",
    "aggregate_accuracy",
    "comparison_table",
    "dice",
    "iou",
    "pass_fail",
    "speedup_percent",
    "timing_stats",
    "AutoGridPrompt",
    "BoxPrompt",
    "PointPrompt",
    "auto_grid",
    "center_point",
    "full_image_box",
    "__version__",
]
