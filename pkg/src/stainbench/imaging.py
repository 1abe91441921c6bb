"""Pixel-level primitives: grayscale conversion, thresholding, median
filtering, connected-component cleanup, and a run-length mask codec.

Conventions used across the package: 8-bit images are numpy ``uint8`` arrays
of shape ``(H, W)`` (grayscale) or ``(H, W, 3)`` (RGB, interleaved). Binary
masks are numpy ``bool`` arrays of shape ``(H, W)``, ``True`` marking stain
foreground. Every function here is pure; none mutates its input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

DARK_FOREGROUND = "dark"
BRIGHT_FOREGROUND = "bright"

_CONNECTIVITY_STRUCTURES = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


class MalformedRunsError(ValueError):
    """Run-length data violates the codec invariants."""


def _require_gray(img: np.ndarray, op: str) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"{op} expects a single-channel (H, W) image, got shape {img.shape}")
    if img.size == 0:
        raise ValueError(f"{op} expects at least one pixel")
    if img.dtype != np.uint8:
        raise ValueError(f"{op} expects uint8 samples, got {img.dtype}")
    return img


def _require_mask(mask: np.ndarray, op: str) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.dtype != np.bool_:
        raise ValueError(f"{op} expects a bool (H, W) mask, got {mask.dtype} shape {mask.shape}")
    return mask


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Convert an RGB image to grayscale with BT.601 luma weights.

    Each output sample is round(0.299*R + 0.587*G + 0.114*B), half-up,
    clamped to [0, 255]. Rejects single-channel input so callers notice
    they should pass it through unchanged instead.
    """
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"to_grayscale expects an (H, W, 3) RGB image, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"to_grayscale expects uint8 samples, got {img.dtype}")
    rgb = img.astype(np.float64)
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    # floor(x + 0.5) is round-half-up; np.round would round ties to even.
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def global_threshold(img: np.ndarray, t: int, polarity: str = DARK_FOREGROUND) -> np.ndarray:
    """Binarize against a fixed threshold.

    Dark foreground marks samples <= t, bright foreground samples > t;
    the two polarities are exact complements at the same t.
    """
    img = _require_gray(img, "global_threshold")
    if not 0 <= int(t) <= 255:
        raise ValueError(f"threshold must be in [0, 255], got {t}")
    if polarity == DARK_FOREGROUND:
        return img <= t
    if polarity == BRIGHT_FOREGROUND:
        return img > t
    raise ValueError(f"unknown polarity {polarity!r}")


def otsu_threshold(img: np.ndarray) -> int:
    """Pick the threshold maximizing between-class variance.

    Returns the smallest t in [0, 255] maximizing the between-class
    variance of the partition {samples <= t} vs {samples > t}. A
    single-level image returns that level. The scan uses exact integer
    arithmetic, so ties resolve deterministically to the smallest t.
    """
    img = _require_gray(img, "otsu_threshold")
    hist = np.bincount(img.ravel(), minlength=256)
    levels = np.flatnonzero(hist)
    if levels.size == 1:
        return int(levels[0])

    total = int(hist.sum())
    total_sum = int(np.dot(hist, np.arange(256)))

    # Between-class variance at t is proportional to
    # (s0*n1 - s1*n0)^2 / (n0*n1); compare candidates by cross-multiplying
    # so no float rounding can flip the argmax.
    best_t = 0
    best_num = -1
    best_den = 1
    n0 = 0
    s0 = 0
    for t in range(256):
        n0 += int(hist[t])
        s0 += t * int(hist[t])
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = total_sum - s0
        num = (s0 * n1 - s1 * n0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t = t
            best_num = num
            best_den = den
    return best_t


def adaptive_threshold(img: np.ndarray, window: int, offset: int) -> np.ndarray:
    """Dark-foreground local-mean thresholding.

    A pixel is foreground iff sample <= mean(window around it) - offset,
    with the window edge-clamped (border pixels replicated, so every
    window holds window**2 samples). The comparison is exact integer
    arithmetic: (sample + offset) * window**2 <= window sum.
    """
    img = _require_gray(img, "adaptive_threshold")
    window = int(window)
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 3, got {window}")
    r = window // 2

    padded = np.pad(img.astype(np.int64), r, mode="edge")
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(padded, axis=0), axis=1, out=integral[1:, 1:])
    h, w = img.shape
    sums = (
        integral[window:, window:]
        - integral[:h, window:]
        - integral[window:, :w]
        + integral[:h, :w]
    )
    return (img.astype(np.int64) + int(offset)) * (window * window) <= sums


def median_filter(img: np.ndarray, radius: int) -> np.ndarray:
    """Replace each sample with the median of its edge-clamped
    (2*radius+1)**2 neighborhood.

    The window count is odd squared, so the median is always an exact
    sample value from the window.
    """
    img = _require_gray(img, "median_filter")
    radius = int(radius)
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    side = 2 * radius + 1
    padded = np.pad(img, radius, mode="edge")
    windows = sliding_window_view(padded, (side, side))
    medians = np.median(windows.reshape(img.shape[0], img.shape[1], side * side), axis=2)
    return medians.astype(np.uint8)


def largest_component(mask: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """Keep only the largest foreground connected component.

    Ties between equal-area components break toward the component whose
    first pixel comes earliest in row-major order. An empty mask maps to
    an empty mask.
    """
    mask = _require_mask(mask, "largest_component")
    if connectivity not in _CONNECTIVITY_STRUCTURES:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    if not mask.any():
        return np.zeros_like(mask)

    labels, count = ndimage.label(mask, structure=_CONNECTIVITY_STRUCTURES[connectivity])
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    areas[0] = 0
    max_area = areas.max()
    candidates = np.flatnonzero(areas == max_area)
    if candidates.size == 1:
        winner = candidates[0]
    else:
        flat = labels.ravel()
        winner = min(candidates, key=lambda lab: int(np.argmax(flat == lab)))
    return labels == winner


@dataclass(frozen=True)
class RunLengthEncoding:
    """Row-major run lengths, alternating background then foreground.

    The first run counts background pixels and is the only run allowed
    to be zero; runs must sum to width * height.
    """

    width: int
    height: int
    runs: tuple[int, ...] = field(default_factory=tuple)

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise MalformedRunsError(f"bad dimensions {self.width}x{self.height}")
        runs = self.runs
        if not runs:
            raise MalformedRunsError("empty run list")
        for value in runs:
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise MalformedRunsError(f"non-integer run {value!r}")
            if value < 0:
                raise MalformedRunsError(f"negative run {value}")
        if any(value == 0 for value in runs[1:]):
            raise MalformedRunsError("zero-length run after the first")
        total = sum(runs)
        expected = self.width * self.height
        if total != expected:
            raise MalformedRunsError(f"runs sum to {total}, expected {expected}")


def rle_encode(mask: np.ndarray) -> RunLengthEncoding:
    """Encode a binary mask as alternating background/foreground run lengths."""
    mask = _require_mask(mask, "rle_encode")
    h, w = mask.shape
    flat = mask.ravel()
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RunLengthEncoding(width=w, height=h, runs=tuple(int(r) for r in runs))


def rle_decode(rle: RunLengthEncoding) -> np.ndarray:
    """Decode run lengths back to a binary mask; rejects malformed runs."""
    rle.validate()
    values = np.zeros(len(rle.runs), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(rle.runs, dtype=np.int64))
    return flat.reshape(rle.height, rle.width)
