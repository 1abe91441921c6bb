"""Checkpoint files with provenance sidecars.

A checkpoint is a torch-serialized payload (weights + variant + state
tag); next to it sits ``<file>.json`` recording {sha256, variant, state}
so a consumer can tell a pretrained base from a fine-tuned result and
detect corruption.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .model import PromptSegNet, build_model

STATE_PRETRAINED = "pretrained"
STATE_FINETUNED = "finetuned"


@dataclass(frozen=True)
class CheckpointRef:
    path: Path
    variant: str
    state: str  # pretrained | finetuned


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sidecar_path(path: Path) -> Path:
    return Path(str(path) + ".json")


def save_checkpoint(model: PromptSegNet, path: str | Path, variant: str, state: str) -> CheckpointRef:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"variant": variant, "state": state, "weights": model.state_dict()}, path)
    sidecar = {"sha256": _sha256(path), "variant": variant, "state": state}
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return CheckpointRef(path=path, variant=variant, state=state)


def load_checkpoint(path: str | Path, verify_hash: bool = True) -> tuple[PromptSegNet, CheckpointRef]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    side = sidecar_path(path)
    if verify_hash:
        if not side.is_file():
            raise FileNotFoundError(f"checkpoint sidecar not found: {side}")
        recorded = json.loads(side.read_text(encoding="utf-8"))
        actual = _sha256(path)
        if recorded.get("sha256") != actual:
            raise ValueError(f"checkpoint hash mismatch for {path}: sidecar {recorded.get('sha256')}, file {actual}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    variant = payload["variant"]
    model = build_model(variant)
    model.load_state_dict(payload["weights"])
    return model, CheckpointRef(path=path, variant=variant, state=payload["state"])
