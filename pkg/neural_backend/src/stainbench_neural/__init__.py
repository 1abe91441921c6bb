"""Promptable neural segmentation backend for the stainbench harness."""

from .checkpoints import CheckpointRef, load_checkpoint, save_checkpoint
from .finetune import FinetuneConfig, finetune
from .model import SMALLEST_VARIANT, VARIANTS, build_model
from .predictor import Predictor
from .pretrain import pretrain

__version__ = "0.1.0"

__all__ = [
    "CheckpointRef",
    "load_checkpoint",
    "save_checkpoint",
    "FinetuneConfig",
    "finetune",
    "SMALLEST_VARIANT",
    "VARIANTS",
    "build_model",
    "Predictor",
    "pretrain",
    "__version__",
]
