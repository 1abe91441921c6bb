"""Fine-tuning on a labeled stain manifest.

Per epoch, per image: resize and normalize the inputs to the model's
expected format, prompt with the full-image bounding box (every frame
holds exactly one stain), predict a mask, take the mean squared error
between the predicted probability map and the binary ground truth, reset
gradients, backpropagate, and step the optimizer. Writes the fine-tuned
checkpoint plus a JSON log of per-epoch mean losses.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import nn

from .checkpoints import STATE_FINETUNED, CheckpointRef, load_checkpoint, save_checkpoint
from .model import INPUT_SIZE, SMALLEST_VARIANT, box_prompt_tensor, image_to_tensor, mask_to_tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FinetuneConfig:
    train_manifest: Path
    epochs: int = 10
    learning_rate: float = 1e-5
    batch_size: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def read_training_pairs(manifest: Path) -> list[tuple[str, Path, Path]]:
    """(image_id, image_path, mask_path) rows; every row must carry a mask
    and both files must load — checked before any training happens."""
    manifest = Path(manifest)
    base = manifest.parent
    pairs = []
    problems = []
    with open(manifest, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row_no, row in enumerate(reader, start=2):
            image_id = (row.get("image_id") or "").strip()
            image_rel = (row.get("image_path") or "").strip()
            mask_rel = (row.get("mask_path") or "").strip()
            if not mask_rel:
                problems.append(f"row {row_no} ({image_id}): no ground-truth mask")
                continue
            image_path = base / image_rel
            mask_path = base / mask_rel
            for path in (image_path, mask_path):
                try:
                    with Image.open(path) as im:
                        im.verify()
                except Exception as exc:
                    problems.append(f"row {row_no} ({image_id}): unloadable {path.name}: {exc}")
                    break
            else:
                pairs.append((image_id, image_path, mask_path))
    if problems:
        raise ValueError(f"{manifest}: " + " | ".join(problems))
    if not pairs:
        raise ValueError(f"{manifest}: no training pairs")
    return pairs


def _load_pair(image_path: Path, mask_path: Path, size: int) -> tuple[torch.Tensor, torch.Tensor]:
    with Image.open(image_path) as im:
        img = np.asarray(im.convert("RGB"), dtype=np.uint8)
    with Image.open(mask_path) as im:
        mask = np.asarray(im.convert("L"), dtype=np.uint8) > 127
    return image_to_tensor(img, size), mask_to_tensor(mask, size)


def finetune(base_checkpoint: str | Path, config: FinetuneConfig, out_path: str | Path) -> tuple[CheckpointRef, Path]:
    """Run the fine-tuning loop; returns the new checkpoint ref and the
    loss-log path (``<out>.losses.json``)."""
    config.validate()
    pairs = read_training_pairs(Path(config.train_manifest))

    model, ref = load_checkpoint(base_checkpoint)
    if ref.variant != SMALLEST_VARIANT:
        raise ValueError(
            f"fine-tuning targets the smallest variant ({SMALLEST_VARIANT!r}); "
            f"base checkpoint is {ref.variant!r}"
        )

    torch.manual_seed(config.seed)
    try:
        torch.use_deterministic_algorithms(True, warn_only=True)
        deterministic = True
    except TypeError:
        deterministic = False

    size = INPUT_SIZE
    box = box_prompt_tensor(0, 0, size, size, size, size, size).unsqueeze(0)
    tensors = [(_load_pair(img_p, mask_p, size)) for _, img_p, mask_p in pairs]

    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    loss_fn = nn.MSELoss()
    epoch_means = []
    for epoch in range(1, config.epochs + 1):
        losses = []
        for start in range(0, len(tensors), config.batch_size):
            chunk = tensors[start : start + config.batch_size]
            images = torch.cat([img for img, _ in chunk])
            targets = torch.cat([tgt for _, tgt in chunk])
            logits = model(images, box.expand(len(chunk), -1, -1, -1))
            loss = loss_fn(torch.sigmoid(logits), targets)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        epoch_means.append(sum(losses) / len(losses))
        log.info("epoch %d/%d mean loss %.6f", epoch, config.epochs, epoch_means[-1])

    out_path = Path(out_path)
    new_ref = save_checkpoint(model.eval(), out_path, variant=ref.variant, state=STATE_FINETUNED)
    log_path = Path(str(out_path) + ".losses.json")
    log_payload = {
        "base_checkpoint": str(Path(base_checkpoint)),
        "train_manifest": str(config.train_manifest),
        "images": len(pairs),
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "seed": config.seed,
        "torch_version": torch.__version__,
        "deterministic_algorithms": deterministic,
        "epoch_mean_loss": [{"epoch": i + 1, "mean_loss": v} for i, v in enumerate(epoch_means)],
    }
    log_path.write_text(json.dumps(log_payload, indent=2) + "\n", encoding="utf-8")
    return new_ref, log_path
