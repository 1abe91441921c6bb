"""Deterministic prompt generation.

Three fixed-shot prompt shapes drive the segmentation backends: a dense
point grid, a single center point, and a full-image bounding box. All
three derive purely from image dimensions, so identical inputs always
produce identical prompts and no per-image adjustment is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

FOREGROUND = 1

DEFAULT_POINTS_PER_SIDE = 32


@dataclass(frozen=True)
class PointPrompt:
    x: int
    y: int
    label: int = FOREGROUND


@dataclass(frozen=True)
class BoxPrompt:
    """Pixel bounds, inclusive-exclusive: x0 <= x < x1, y0 <= y < y1."""

    x0: int
    y0: int
    x1: int
    y1: int


@dataclass(frozen=True)
class AutoGridPrompt:
    points_per_side: int = DEFAULT_POINTS_PER_SIDE


Prompt = Union[PointPrompt, BoxPrompt, AutoGridPrompt]


def _require_dims(width: int, height: int) -> None:
    if width < 1 or height < 1:
        raise ValueError(f"image dimensions must be positive, got {width}x{height}")


def full_image_box(width: int, height: int) -> BoxPrompt:
    """Box covering the whole image."""
    _require_dims(width, height)
    return BoxPrompt(0, 0, width, height)


def center_point(width: int, height: int) -> PointPrompt:
    """Foreground point at (floor(width/2), floor(height/2))."""
    _require_dims(width, height)
    return PointPrompt(width // 2, height // 2)


def grid_coordinates(width: int, height: int, n: int) -> list[tuple[int, int]]:
    """Cell-centered n x n grid coordinates, row-major.

    x_i = floor((i + 0.5) * width / n); computed in integer arithmetic so
    no float rounding can push a point out of bounds.
    """
    _require_dims(width, height)
    if n < 1:
        raise ValueError(f"points_per_side must be >= 1, got {n}")
    xs = [((2 * i + 1) * width) // (2 * n) for i in range(n)]
    ys = [((2 * j + 1) * height) // (2 * n) for j in range(n)]
    return [(x, y) for y in ys for x in xs]


def auto_grid(width: int, height: int, n: int = DEFAULT_POINTS_PER_SIDE) -> list[PointPrompt]:
    """n x n foreground point prompts on a cell-centered grid, row-major."""
    return [PointPrompt(x, y) for x, y in grid_coordinates(width, height, n)]


def prompt_to_json(prompt: Prompt) -> dict:
    if isinstance(prompt, AutoGridPrompt):
        return {"type": "auto_grid", "points_per_side": prompt.points_per_side}
    if isinstance(prompt, PointPrompt):
        return {"type": "point", "x": prompt.x, "y": prompt.y, "label": prompt.label}
    if isinstance(prompt, BoxPrompt):
        return {
            "type": "box",
            "x0": prompt.x0,
            "y0": prompt.y0,
            "x1": prompt.x1,
            "y1": prompt.y1,
        }
    raise TypeError(f"unknown prompt {prompt!r}")


def prompt_from_json(data: dict) -> Prompt:
    kind = data.get("type")
    if kind == "auto_grid":
        return AutoGridPrompt(points_per_side=int(data["points_per_side"]))
    if kind == "point":
        return PointPrompt(x=int(data["x"]), y=int(data["y"]), label=int(data.get("label", FOREGROUND)))
    if kind == "box":
        return BoxPrompt(x0=int(data["x0"]), y0=int(data["y0"]), x1=int(data["x1"]), y1=int(data["y1"]))
    raise ValueError(f"unknown prompt type {kind!r}")
