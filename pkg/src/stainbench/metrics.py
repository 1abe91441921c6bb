"""Mask-quality metrics and the aggregation arithmetic behind the
accuracy, timing, and classical-vs-neural report tables.

Accuracy is operationalized as IoU against ground truth compared to a
configurable cutoff tau (default 0.5); a record passes iff iou >= tau.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Optional, Sequence

import numpy as np

DEFAULT_TAU = 0.5

# Display order for aggregate rows; unknown values sort after these.
MODE_ORDER = ("auto", "box", "point", "threshold", "threshold+median")
MODEL_ORDER = ("default", "fine-tuned", "classical")

MODE_LABELS = {
    "auto": "Auto",
    "box": "Box",
    "point": "Point",
    "threshold": "Thres",
    "threshold+median": "Thres + MF",
}
MODEL_LABELS = {
    "default": "Default",
    "fine-tuned": "Fine Tuned",
    "classical": "Classical",
}


@dataclass(frozen=True)
class EvalRecord:
    """Per-image benchmark result."""

    image_id: str
    angle_deg: int
    colorspace: str  # "RGB" | "gray"
    mode: str  # auto | box | point | threshold | threshold+median
    model: str  # default | fine-tuned | classical
    iou: float
    dice: float
    passed: bool
    latency_s: float
    error: Optional[str] = None


@dataclass(frozen=True)
class ReportRow:
    """Aggregated accuracy for one (mode, model) group.

    Accuracy fields hold exact percentages; rounding to one decimal
    (half-up) happens at display time.
    """

    mode_model: str
    rgb_accuracy_pct: Optional[float]
    gray_accuracy_pct: Optional[float]
    overall_accuracy_pct: float
    n_rgb: int
    n_gray: int


@dataclass(frozen=True)
class TimingRow:
    mode_model: str
    mean_s: float
    min_s: float
    max_s: float
    n: int


@dataclass(frozen=True)
class ComparisonRow:
    """Overall pass percentage per configuration; None marks a
    configuration absent from the records (never silently zero)."""

    thres: Optional[float]
    thres_mf: Optional[float]
    default_box: Optional[float]
    finetuned_box: Optional[float]


def round_half_up(value: float, decimals: int = 1) -> float:
    """Round half away from zero on the decimal value, e.g. 87.77.. -> 87.8."""
    quantum = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def format_pct(value: Optional[float]) -> str:
    if value is None:
        return "n/a"
    return f"{round_half_up(value, 1):.1f}"


def format_seconds(value: float) -> str:
    return f"{round_half_up(value, 2):.2f}"


def _overlap_counts(a: np.ndarray, b: np.ndarray) -> tuple[int, int, int]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"mask dimensions differ: {a.shape} vs {b.shape}")
    if a.dtype != np.bool_ or b.dtype != np.bool_:
        raise ValueError("masks must be bool arrays")
    inter = int(np.logical_and(a, b).sum())
    return inter, int(a.sum()), int(b.sum())


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    inter, na, nb = _overlap_counts(a, b)
    union = na + nb - inter
    if union == 0:
        return 1.0
    return inter / union


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice coefficient 2|a&b| / (|a|+|b|); 1.0 when both masks are empty."""
    inter, na, nb = _overlap_counts(a, b)
    if na + nb == 0:
        return 1.0
    return 2.0 * inter / (na + nb)


def pass_fail(iou_value: float, tau: float) -> bool:
    """Boundary-inclusive pass criterion: iou >= tau."""
    return iou_value >= tau


def mode_model_label(mode: str, model: str) -> str:
    mode_label = MODE_LABELS.get(mode, mode.title())
    model_label = MODEL_LABELS.get(model, model.title())
    return f"{mode_label}-{model_label}"


def _group_sort_key(key: tuple[str, str]) -> tuple[int, int, str, str]:
    mode, model = key
    mode_rank = MODE_ORDER.index(mode) if mode in MODE_ORDER else len(MODE_ORDER)
    model_rank = MODEL_ORDER.index(model) if model in MODEL_ORDER else len(MODEL_ORDER)
    return (mode_rank, model_rank, mode, model)


def _grouped(records: Iterable[EvalRecord]) -> dict[tuple[str, str], list[EvalRecord]]:
    groups: dict[tuple[str, str], list[EvalRecord]] = {}
    for rec in records:
        groups.setdefault((rec.mode, rec.model), []).append(rec)
    return dict(sorted(groups.items(), key=lambda kv: _group_sort_key(kv[0])))


def aggregate_accuracy(records: Sequence[EvalRecord]) -> list[ReportRow]:
    """Per (mode, model) pass percentages, split by colorspace.

    Empty groups simply do not appear; a colorspace with no records in a
    group reports None for that column.
    """
    rows = []
    for (mode, model), group in _grouped(records).items():
        rgb = [r for r in group if r.colorspace == "RGB"]
        gray = [r for r in group if r.colorspace == "gray"]
        passes_rgb = sum(r.passed for r in rgb)
        passes_gray = sum(r.passed for r in gray)
        total = len(rgb) + len(gray)
        if total == 0:
            continue
        rows.append(
            ReportRow(
                mode_model=mode_model_label(mode, model),
                rgb_accuracy_pct=100.0 * passes_rgb / len(rgb) if rgb else None,
                gray_accuracy_pct=100.0 * passes_gray / len(gray) if gray else None,
                overall_accuracy_pct=100.0 * (passes_rgb + passes_gray) / total,
                n_rgb=len(rgb),
                n_gray=len(gray),
            )
        )
    return rows


def timing_stats(records: Sequence[EvalRecord]) -> list[TimingRow]:
    """Mean/min/max latency per (mode, model); empty input yields no rows."""
    rows = []
    for (mode, model), group in _grouped(records).items():
        latencies = [r.latency_s for r in group]
        if any(t < 0 for t in latencies):
            raise ValueError("latencies must be >= 0")
        rows.append(
            TimingRow(
                mode_model=mode_model_label(mode, model),
                mean_s=sum(latencies) / len(latencies),
                min_s=min(latencies),
                max_s=max(latencies),
                n=len(latencies),
            )
        )
    return rows


def speedup_percent(t_base: float, t_new: float) -> float:
    """Percentage speedup of t_new over t_base, relative to the new time.

    Convention: 100 * (t_base - t_new) / t_new, so halving the time is a
    100% speedup. Other conventions (relative to the baseline time, or
    with coarser rounding) yield different figures for the same inputs.
    """
    if t_base <= 0 or t_new <= 0:
        raise ValueError(f"times must be positive, got {t_base} and {t_new}")
    return 100.0 * (t_base - t_new) / t_new


def model_mean_latency(records: Sequence[EvalRecord], model: str) -> Optional[float]:
    latencies = [r.latency_s for r in records if r.model == model]
    if not latencies:
        return None
    return sum(latencies) / len(latencies)


def _config_pct(records: Sequence[EvalRecord], mode: str, model: str) -> Optional[float]:
    group = [r for r in records if r.mode == mode and r.model == model]
    if not group:
        return None
    return 100.0 * sum(r.passed for r in group) / len(group)


def comparison_table(records: Sequence[EvalRecord]) -> ComparisonRow:
    """Classical-vs-neural accuracy row over the same image set."""
    return ComparisonRow(
        thres=_config_pct(records, "threshold", "classical"),
        thres_mf=_config_pct(records, "threshold+median", "classical"),
        default_box=_config_pct(records, "box", "default"),
        finetuned_box=_config_pct(records, "box", "fine-tuned"),
    )
