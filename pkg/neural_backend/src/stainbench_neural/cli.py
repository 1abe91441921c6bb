"""Neural backend CLI: init (pretrained checkpoint), serve (protocol
child process), finetune (training run producing a fine-tuned
checkpoint plus a loss log)."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .checkpoints import STATE_PRETRAINED, save_checkpoint
from .finetune import FinetuneConfig, finetune
from .model import SMALLEST_VARIANT, VARIANTS
from .pretrain import DEFAULT_STEPS, pretrain

log = logging.getLogger(__name__)


def cmd_init(args: argparse.Namespace) -> int:
    model = pretrain(args.variant, seed=args.seed, steps=args.steps)
    ref = save_checkpoint(model, args.out, variant=args.variant, state=STATE_PRETRAINED)
    print(ref.path)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .serve import serve

    serve(args.checkpoint)
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    config = FinetuneConfig(
        train_manifest=Path(args.manifest),
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    ref, log_path = finetune(args.base, config, args.out)
    print(ref.path)
    print(log_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stainbench-neural", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a pretrained-state checkpoint from seeded shape pretraining")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=sorted(VARIANTS), default=SMALLEST_VARIANT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("serve", help="serve the wire protocol on stdin/stdout")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("finetune", help="fine-tune a base checkpoint on a labeled manifest")
    p.add_argument("--base", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_finetune)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("STAINBENCH_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
