"""Echo-oracle backend: returns the ground-truth mask named in the
request params. Exists to close the loop on the harness itself — a full
benchmark run against it must score 100% everywhere.
"""

from __future__ import annotations

import time

from .. import pngio
from ..bridge import MODE_AUTO, MODE_BOX, MODE_POINT
from ..imaging import rle_encode
from .serving import serve_loop


def _handle(request: dict) -> dict:
    params = request.get("params") or {}
    mask_path = params.get("mask_path")
    if not mask_path:
        raise ValueError("echo backend needs params.mask_path")
    width, height = pngio.image_size(request["image_path"])
    start = time.perf_counter()
    mask = pngio.load_mask(mask_path)
    latency = time.perf_counter() - start
    if mask.shape != (height, width):
        raise ValueError(f"mask {mask.shape[1]}x{mask.shape[0]} does not match image {width}x{height}")
    rle = rle_encode(mask)
    return {"width": rle.width, "height": rle.height, "rle": list(rle.runs), "latency_s": latency}


def main() -> None:
    serve_loop("echo-oracle", (MODE_AUTO, MODE_BOX, MODE_POINT), _handle)


if __name__ == "__main__":
    main()
