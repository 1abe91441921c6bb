"""PNG I/O for images and masks.

Images are 8-bit grayscale or RGB PNGs. Masks are 8-bit grayscale PNGs
with 0 = background and 255 = foreground.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG as uint8, shape (H, W) for grayscale or (H, W, 3) for RGB."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "LA"):
            return np.asarray(im.convert("L"), dtype=np.uint8)
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim == 2:
        pil = Image.fromarray(img, mode="L")
    elif img.ndim == 3 and img.shape[2] == 3:
        pil = Image.fromarray(img, mode="RGB")
    else:
        raise ValueError(f"cannot save image of shape {img.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pil.save(path, format="PNG")


def load_mask(path: str | Path) -> np.ndarray:
    """Read a mask PNG to a bool array; any sample above 127 is foreground."""
    with Image.open(path) as im:
        gray = np.asarray(im.convert("L"), dtype=np.uint8)
    return gray > 127


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.dtype != np.bool_:
        raise ValueError(f"cannot save mask of dtype {mask.dtype} shape {mask.shape}")
    save_image(path, np.where(mask, 255, 0).astype(np.uint8))


def image_size(path: str | Path) -> tuple[int, int]:
    """Return (width, height) from the PNG header without decoding pixels."""
    with Image.open(path) as im:
        return im.size
