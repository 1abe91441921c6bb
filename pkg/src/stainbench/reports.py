"""CSV and markdown report emission.

records.csv carries one row per evaluated image. The three markdown
tables cover accuracy by mode and model, processing time with the
speedup between default and fine-tuned models, and the classical vs
promptable comparison row.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

from .metrics import (
    ComparisonRow,
    EvalRecord,
    ReportRow,
    TimingRow,
    format_pct,
    format_seconds,
    model_mean_latency,
    speedup_percent,
)

RECORD_FIELDS = ("image_id", "angle_deg", "colorspace", "mode", "model", "iou", "dice", "passed", "latency_s", "error")

SPEEDUP_NOTE = (
    "Speedup convention: 100 * (t_default - t_finetuned) / t_finetuned, i.e. improvement "
    "relative to the faster time, rounded half-up to 2 decimals. Conventions that divide by "
    "the baseline time or round differently yield other figures for the same means."
)


def write_records_csv(records: Sequence[EvalRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow(
                [
                    r.image_id,
                    r.angle_deg,
                    r.colorspace,
                    r.mode,
                    r.model,
                    repr(r.iou),
                    repr(r.dice),
                    int(r.passed),
                    repr(r.latency_s),
                    r.error or "",
                ]
            )
    return path


def _markdown_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "| " + " | ".join(h.ljust(widths[i]) for i, h in enumerate(header)) + " |",
        "|" + "|".join("-" * (w + 2) for w in widths) + "|",
    ]
    for row in rows:
        lines.append("| " + " | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) + " |")
    return "\n".join(lines) + "\n"


def _write(path: Path, title: str, body: str, footers: Sequence[str] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = f"# {title}\n\n{body}"
    for footer in footers:
        text += f"\n{footer}\n"
    path.write_text(text, encoding="utf-8")
    return path


def write_accuracy_table(rows: Sequence[ReportRow], path: str | Path, footers: Sequence[str] = ()) -> Path:
    header = ["Mode & Model", "RGB Accuracy", "Gray Accuracy", "Overall Accuracy", "n (RGB/gray)"]
    body_rows = [
        [
            row.mode_model,
            format_pct(row.rgb_accuracy_pct),
            format_pct(row.gray_accuracy_pct),
            format_pct(row.overall_accuracy_pct),
            f"{row.n_rgb}/{row.n_gray}",
        ]
        for row in rows
    ]
    return _write(Path(path), "Accuracy by mode and model", _markdown_table(header, body_rows), footers)


def write_timing_table(
    timing_rows: Sequence[TimingRow],
    records: Sequence[EvalRecord],
    path: str | Path,
    footers: Sequence[str] = (),
) -> Path:
    header = ["Mode & Model", "Mean (s)", "Min (s)", "Max (s)", "n"]
    body_rows = [
        [row.mode_model, format_seconds(row.mean_s), format_seconds(row.min_s), format_seconds(row.max_s), str(row.n)]
        for row in timing_rows
    ]
    body = _markdown_table(header, body_rows)

    extra = [SPEEDUP_NOTE]
    mean_default = model_mean_latency(records, "default")
    mean_finetuned = model_mean_latency(records, "fine-tuned")
    if mean_default is not None and mean_finetuned is not None and mean_default > 0 and mean_finetuned > 0:
        pct = speedup_percent(mean_default, mean_finetuned)
        body += f"\nPercentage faster (fine-tuned vs default, mean latency): {format_seconds(pct)}%\n"
    return _write(Path(path), "Processing time per image", body, list(footers) + extra)


def write_comparison_table(comparison: ComparisonRow, path: str | Path, footers: Sequence[str] = ()) -> Path:
    header = ["Thres", "Thres + MF", "Default-Box", "FineTuned-Box"]
    row = [
        format_pct(comparison.thres),
        format_pct(comparison.thres_mf),
        format_pct(comparison.default_box),
        format_pct(comparison.finetuned_box),
    ]
    footer_list = list(footers)
    if any(v is None for v in (comparison.thres, comparison.thres_mf, comparison.default_box, comparison.finetuned_box)):
        footer_list.append("n/a marks a configuration with no records in this run.")
    return _write(Path(path), "Classical vs promptable segmentation accuracy", _markdown_table(header, [row]), footer_list)
