"""Classical thresholding backend.

Serves two modes: automatic thresholding with largest-component cleanup,
and the same pipeline with a median prefilter. Latency covers the mask
computation only, not image decode.
"""

from __future__ import annotations

import time

import numpy as np

from .. import pngio
from ..bridge import MODE_CLASSICAL, MODE_CLASSICAL_MEDIAN
from ..imaging import global_threshold, largest_component, median_filter, otsu_threshold, rle_encode, to_grayscale
from .serving import serve_loop

DEFAULT_MEDIAN_RADIUS = 1
DEFAULT_CONNECTIVITY = 8


def classical_threshold_mask(
    gray: np.ndarray,
    median_radius: int | None = None,
    connectivity: int = DEFAULT_CONNECTIVITY,
) -> np.ndarray:
    """Optional median prefilter, automatic dark-foreground threshold,
    then keep the largest component."""
    if median_radius is not None:
        gray = median_filter(gray, median_radius)
    t = otsu_threshold(gray)
    return largest_component(global_threshold(gray, t), connectivity=connectivity)


def _handle(request: dict) -> dict:
    params = request.get("params") or {}
    img = pngio.load_image(request["image_path"])
    gray = to_grayscale(img) if img.ndim == 3 else img

    mode = request["mode"]
    radius = int(params.get("median_radius", DEFAULT_MEDIAN_RADIUS)) if mode == MODE_CLASSICAL_MEDIAN else None
    connectivity = int(params.get("connectivity", DEFAULT_CONNECTIVITY))

    start = time.perf_counter()
    mask = classical_threshold_mask(gray, median_radius=radius, connectivity=connectivity)
    latency = time.perf_counter() - start

    rle = rle_encode(mask)
    return {"width": rle.width, "height": rle.height, "rle": list(rle.runs), "latency_s": latency}


def main() -> None:
    serve_loop("classical", (MODE_CLASSICAL, MODE_CLASSICAL_MEDIAN), _handle)


if __name__ == "__main__":
    main()
