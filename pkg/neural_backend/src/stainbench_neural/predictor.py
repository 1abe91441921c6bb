"""Inference wrapper: prompts in image space in, full-resolution masks out.

All prediction runs at the model's fixed input size; the chosen logits
are resized back to the image's resolution and thresholded at 0.5.
Confidence of a candidate mask is its mean foreground probability (0 for
an empty mask), used by the grid mode to pick one mask per image.
"""

from __future__ import annotations

import time

import numpy as np
import torch
from torch.nn import functional as F

from .model import INPUT_SIZE, PromptSegNet, box_prompt_tensor, image_to_tensor, point_prompt_tensor

AUTO_COVERAGE_LIMIT = 0.5
GRID_BATCH = 32


def grid_points(width: int, height: int, n: int) -> list[tuple[int, int]]:
    """Cell-centered n x n grid in image space, row-major (the wire
    protocol's auto_grid placement)."""
    xs = [((2 * i + 1) * width) // (2 * n) for i in range(n)]
    ys = [((2 * j + 1) * height) // (2 * n) for j in range(n)]
    return [(x, y) for y in ys for x in xs]


class Predictor:
    def __init__(self, model: PromptSegNet, size: int = INPUT_SIZE):
        self.model = model.eval()
        self.size = size

    @torch.no_grad()
    def _forward(self, image_t: torch.Tensor, prompts: torch.Tensor) -> torch.Tensor:
        """prompts: B x 2 x S x S -> probabilities B x S x S."""
        images = image_t.expand(prompts.shape[0], -1, -1, -1)
        logits = self.model(images, prompts)
        return torch.sigmoid(logits)[:, 0]

    def _to_image_mask(self, prob: torch.Tensor, width: int, height: int) -> np.ndarray:
        up = F.interpolate(prob.unsqueeze(0).unsqueeze(0), size=(height, width), mode="bilinear", align_corners=False)
        return (up[0, 0] >= 0.5).numpy()

    def predict_point(self, img: np.ndarray, x: int, y: int) -> tuple[np.ndarray, float]:
        height, width = img.shape[:2]
        image_t = image_to_tensor(img, self.size)
        prompt = point_prompt_tensor(x, y, width, height, self.size).unsqueeze(0)
        start = time.perf_counter()
        prob = self._forward(image_t, prompt)[0]
        latency = time.perf_counter() - start
        return self._to_image_mask(prob, width, height), latency

    def predict_box(self, img: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> tuple[np.ndarray, float]:
        height, width = img.shape[:2]
        image_t = image_to_tensor(img, self.size)
        prompt = box_prompt_tensor(x0, y0, x1, y1, width, height, self.size).unsqueeze(0)
        start = time.perf_counter()
        prob = self._forward(image_t, prompt)[0]
        latency = time.perf_counter() - start
        return self._to_image_mask(prob, width, height), latency

    def predict_grid(self, img: np.ndarray, points_per_side: int) -> tuple[np.ndarray, float]:
        """Run the point grid and keep one mask.

        Candidates covering more than half the image are discarded as
        background captures; the highest-confidence survivor wins. If
        everything is discarded, fall back to the union of all
        candidates.
        """
        height, width = img.shape[:2]
        image_t = image_to_tensor(img, self.size)
        prompts = torch.stack(
            [point_prompt_tensor(x, y, width, height, self.size) for x, y in grid_points(width, height, points_per_side)]
        )
        start = time.perf_counter()
        probs = torch.cat([self._forward(image_t, chunk) for chunk in torch.split(prompts, GRID_BATCH)])
        latency = time.perf_counter() - start

        candidates = probs >= 0.5
        coverage = candidates.float().mean(dim=(1, 2))
        kept = coverage <= AUTO_COVERAGE_LIMIT
        if kept.any():
            # mean probability over the predicted foreground; empty masks score 0
            confidences = (probs * candidates).sum(dim=(1, 2)) / candidates.sum(dim=(1, 2)).clamp(min=1)
            confidences = torch.where(kept, confidences, torch.full_like(confidences, -1.0))
            chosen = probs[int(torch.argmax(confidences))]
        else:
            chosen = probs.max(dim=0).values  # union fallback
        return self._to_image_mask(chosen, width, height), latency
