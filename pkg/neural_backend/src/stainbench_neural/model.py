"""Compact promptable segmentation network.

The model takes a fixed-size image plus two prompt channels (a point
heatmap and a filled box) and predicts a foreground probability map.
Variants differ only in channel width; "tiny" is the smallest and the
one fine-tuning targets.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

INPUT_SIZE = 96
POINT_SIGMA = 3.0

# channel width per variant, ordered smallest first
VARIANTS = {"tiny": 16, "small": 32}
SMALLEST_VARIANT = "tiny"


class PromptSegNet(nn.Module):
    """Encoder/decoder over 5 input channels: RGB + point map + box map."""

    def __init__(self, width: int = VARIANTS[SMALLEST_VARIANT]):
        super().__init__()
        w = width
        self.encoder = nn.Sequential(
            nn.Conv2d(5, w, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(w, 2 * w, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * w, 2 * w, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(4 * w, 4 * w, 3, padding=1),
            nn.ReLU(inplace=True),
        )
        self.decoder = nn.Sequential(
            nn.ConvTranspose2d(4 * w, 2 * w, 2, stride=2),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(2 * w, w, 2, stride=2),
            nn.ReLU(inplace=True),
            nn.Conv2d(w, 1, 3, padding=1),
        )

    def forward(self, images: torch.Tensor, prompts: torch.Tensor) -> torch.Tensor:
        """images: B x 3 x S x S in [0, 1]; prompts: B x 2 x S x S.

        Returns mask logits, B x 1 x S x S.
        """
        x = torch.cat([images, prompts], dim=1)
        return self.decoder(self.encoder(x))


def build_model(variant: str) -> PromptSegNet:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, choose from {sorted(VARIANTS)}")
    return PromptSegNet(width=VARIANTS[variant])


def image_to_tensor(img: np.ndarray, size: int = INPUT_SIZE) -> torch.Tensor:
    """uint8 (H, W) or (H, W, 3) -> 1 x 3 x size x size float in [0, 1]."""
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got {img.shape}")
    arr = np.asarray(img, dtype=np.float32) / 255.0  # copies, so PIL's read-only arrays are fine
    t = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
    return F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)


def mask_to_tensor(mask: np.ndarray, size: int = INPUT_SIZE) -> torch.Tensor:
    """bool (H, W) -> 1 x 1 x size x size float {0, 1} (nearest resize)."""
    t = torch.from_numpy(mask.astype(np.float32)).unsqueeze(0).unsqueeze(0)
    return F.interpolate(t, size=(size, size), mode="nearest")


def point_channel(x: float, y: float, size: int = INPUT_SIZE, sigma: float = POINT_SIGMA) -> torch.Tensor:
    """Gaussian bump centered at model-space coordinates (x, y)."""
    ys = torch.arange(size, dtype=torch.float32).unsqueeze(1)
    xs = torch.arange(size, dtype=torch.float32).unsqueeze(0)
    d2 = (xs - x) ** 2 + (ys - y) ** 2
    return torch.exp(-d2 / (2.0 * sigma * sigma))


def box_channel(x0: float, y0: float, x1: float, y1: float, size: int = INPUT_SIZE) -> torch.Tensor:
    channel = torch.zeros((size, size), dtype=torch.float32)
    xa = max(0, int(math.floor(x0)))
    ya = max(0, int(math.floor(y0)))
    xb = min(size, int(math.ceil(x1)))
    yb = min(size, int(math.ceil(y1)))
    if xb > xa and yb > ya:
        channel[ya:yb, xa:xb] = 1.0
    return channel


def point_prompt_tensor(x: int, y: int, image_w: int, image_h: int, size: int = INPUT_SIZE) -> torch.Tensor:
    """2 x S x S prompt channels for a foreground point in image space."""
    sx = x * size / image_w
    sy = y * size / image_h
    return torch.stack([point_channel(sx, sy, size), torch.zeros((size, size))])


def box_prompt_tensor(x0: int, y0: int, x1: int, y1: int, image_w: int, image_h: int, size: int = INPUT_SIZE) -> torch.Tensor:
    """2 x S x S prompt channels for a box in image space."""
    scale_x = size / image_w
    scale_y = size / image_h
    box = box_channel(x0 * scale_x, y0 * scale_y, x1 * scale_x, y1 * scale_y, size)
    return torch.stack([torch.zeros((size, size)), box])
