"""Wire-protocol server for the neural backend.

Speaks the harness protocol: one JSON handshake line, then one response
or error line per request line, masks as row-major run lengths starting
with a background count. Box and point requests run with a single mask
(the multimask flag is forced off with a warning); grid requests return
one mask picked by the coverage/confidence rule. latency_s covers model
inference only.
"""

from __future__ import annotations

import json
import sys

import numpy as np
import torch
from PIL import Image

from .checkpoints import load_checkpoint
from .predictor import Predictor

PROTOCOL_VERSION = 1
MODES = ("auto", "box", "point")


def rle_runs(mask: np.ndarray) -> list[int]:
    """Alternating background/foreground run lengths, row-major; the
    first run is background and may be 0."""
    flat = mask.ravel()
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = [int(r) for r in np.diff(edges)]
    if flat[0]:
        runs.insert(0, 0)
    return runs


def _load_image(path: str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def _handle(predictor: Predictor, request: dict) -> dict:
    mode = request.get("mode")
    img = _load_image(request["image_path"])
    height, width = img.shape[:2]

    if request.get("multimask"):
        print("warning: multimask requested; serving the single best mask", file=sys.stderr)

    prompt = request.get("prompt") or {}
    if mode == "box":
        if prompt.get("type") != "box":
            raise ValueError(f"box mode needs a box prompt, got {prompt.get('type')!r}")
        mask, latency = predictor.predict_box(
            img, int(prompt["x0"]), int(prompt["y0"]), int(prompt["x1"]), int(prompt["y1"])
        )
    elif mode == "point":
        if prompt.get("type") != "point":
            raise ValueError(f"point mode needs a point prompt, got {prompt.get('type')!r}")
        x, y = int(prompt["x"]), int(prompt["y"])
        if not (0 <= x < width and 0 <= y < height):
            raise ValueError(f"point ({x}, {y}) outside {width}x{height} image")
        mask, latency = predictor.predict_point(img, x, y)
    elif mode == "auto":
        if prompt.get("type") != "auto_grid":
            raise ValueError(f"auto mode needs an auto_grid prompt, got {prompt.get('type')!r}")
        n = int(prompt.get("points_per_side", 32))
        if n < 1:
            raise ValueError(f"points_per_side must be >= 1, got {n}")
        mask, latency = predictor.predict_grid(img, n)
    else:
        raise ValueError(f"unsupported mode {mode!r}")

    return {"width": width, "height": height, "rle": rle_runs(mask), "latency_s": latency}


def serve(checkpoint_path: str) -> None:
    model, ref = load_checkpoint(checkpoint_path)
    torch.manual_seed(0)
    torch.set_num_threads(max(1, torch.get_num_threads()))
    predictor = Predictor(model)

    out = sys.stdout
    handshake = {
        "protocol_version": PROTOCOL_VERSION,
        "backend_name": f"neural-{ref.variant}-{ref.state}",
        "modes": list(MODES),
    }
    out.write(json.dumps(handshake) + "\n")
    out.flush()

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            out.write(json.dumps({"id": None, "error": f"request is not JSON: {exc}"}) + "\n")
            out.flush()
            continue
        if not isinstance(request, dict):
            out.write(json.dumps({"id": None, "error": "request is not an object"}) + "\n")
            out.flush()
            continue
        request_id = request.get("id")
        try:
            response = _handle(predictor, request)
            response["id"] = request_id
        except Exception as exc:
            response = {"id": request_id, "error": f"{type(exc).__name__}: {exc}"}
        out.write(json.dumps(response) + "\n")
        out.flush()
