"""Seeded pretraining on procedural blob scenes.

Produces the "pretrained" checkpoint state: the network learns to
segment a single salient blob under point and box prompts before it
ever sees a stain. Scenes are elliptical blobs over flat or grainy
backgrounds, prompted with the full-image box, a jittered tight box, a
point inside the blob, or (occasionally) a background point whose
target is an empty mask.
"""

from __future__ import annotations

import logging

import numpy as np
import torch
from torch import nn

from .model import INPUT_SIZE, PromptSegNet, box_prompt_tensor, build_model, point_prompt_tensor

log = logging.getLogger(__name__)

DEFAULT_STEPS = 300
BATCH_SIZE = 8
LEARNING_RATE = 1e-3


def _random_scene(rng: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """One grayscale-as-RGB blob scene plus its mask."""
    background = int(rng.integers(140, 256))
    intensity = int(rng.integers(10, max(11, background - 60)))
    grain = int(rng.integers(0, 51))

    a = int(rng.integers(4, 31))
    b = int(rng.integers(3, a + 1))
    cx = int(rng.integers(a + 2, size - a - 2))
    cy = int(rng.integers(b + 2, size - b - 2))

    ys, xs = np.mgrid[0:size, 0:size]
    mask = ((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2 <= 1.0

    field = background + rng.uniform(-grain, grain, (size, size))
    img = np.clip(field, 0, 255).astype(np.uint8)
    img[mask] = intensity
    return np.repeat(img[:, :, None], 3, axis=2), mask


def _random_prompt(rng, mask: np.ndarray, size: int) -> tuple[torch.Tensor, np.ndarray]:
    """Prompt channels plus the target mask for one scene."""
    kind = rng.choice(["box-full", "box-tight", "point-in", "point-out"], p=[0.3, 0.2, 0.35, 0.15])
    ys, xs = np.nonzero(mask)
    if kind == "box-full":
        return box_prompt_tensor(0, 0, size, size, size, size, size), mask
    if kind == "box-tight":
        jitter = lambda: int(rng.integers(0, 4))
        x0 = max(0, xs.min() - jitter())
        y0 = max(0, ys.min() - jitter())
        x1 = min(size, xs.max() + 1 + jitter())
        y1 = min(size, ys.max() + 1 + jitter())
        return box_prompt_tensor(x0, y0, x1, y1, size, size, size), mask
    if kind == "point-in":
        k = int(rng.integers(0, len(xs)))
        return point_prompt_tensor(int(xs[k]), int(ys[k]), size, size, size), mask
    # background point: teach "nothing here"
    bg_ys, bg_xs = np.nonzero(~mask)
    k = int(rng.integers(0, len(bg_xs)))
    return point_prompt_tensor(int(bg_xs[k]), int(bg_ys[k]), size, size, size), np.zeros_like(mask)


def pretrain(variant: str, seed: int, steps: int = DEFAULT_STEPS, size: int = INPUT_SIZE) -> PromptSegNet:
    """Train a fresh model on procedural scenes; returns it in eval mode."""
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = build_model(variant)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=LEARNING_RATE)
    # blobs are a small pixel fraction; weighted BCE keeps the foreground
    # gradient alive where plain MSE would collapse to all-background
    loss_fn = nn.BCEWithLogitsLoss(pos_weight=torch.tensor(4.0))

    for step in range(steps):
        images, prompts, targets = [], [], []
        for _ in range(BATCH_SIZE):
            img, mask = _random_scene(rng, size)
            prompt, target = _random_prompt(rng, mask, size)
            images.append(torch.from_numpy(img).permute(2, 0, 1).float() / 255.0)
            prompts.append(prompt)
            targets.append(torch.from_numpy(target.astype(np.float32)).unsqueeze(0))
        logits = model(torch.stack(images), torch.stack(prompts))
        loss = loss_fn(logits, torch.stack(targets))
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        if step % 50 == 0 or step == steps - 1:
            log.info("pretrain step %d/%d loss %.4f", step + 1, steps, float(loss.detach()))

    return model.eval()
