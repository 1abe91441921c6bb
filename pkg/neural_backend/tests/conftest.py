import pytest

from stainbench.dataset import SyntheticSpec, write_dataset
from stainbench_neural.checkpoints import STATE_PRETRAINED, save_checkpoint
from stainbench_neural.model import SMALLEST_VARIANT
from stainbench_neural.pretrain import pretrain

PRETRAIN_STEPS = 120


@pytest.fixture(scope="session")
def base_checkpoint(tmp_path_factory):
    """One modestly pretrained base checkpoint shared by the whole run."""
    model = pretrain(SMALLEST_VARIANT, seed=0, steps=PRETRAIN_STEPS)
    path = tmp_path_factory.mktemp("ckpt") / "base.pt"
    save_checkpoint(model, path, variant=SMALLEST_VARIANT, state=STATE_PRETRAINED)
    return path


@pytest.fixture(scope="session")
def eval_corpus(tmp_path_factory):
    """16 labeled droplet frames in two different image sizes."""
    root = tmp_path_factory.mktemp("eval-corpus")
    specs = []
    for k in range(16):
        angle = (10, 30, 50, 70, 90)[k % 5]
        if k % 2 == 0:
            specs.append(SyntheticSpec(angle_deg=angle, rng_seed=4000 + k, width=96, height=96))
        else:
            specs.append(
                SyntheticSpec(angle_deg=angle, rng_seed=4000 + k, width=128, height=80, droplet_length_px=20)
            )
    return write_dataset(specs, root)


@pytest.fixture(scope="session")
def train_corpus_20(tmp_path_factory):
    """20 labeled droplet frames for fine-tune runs."""
    root = tmp_path_factory.mktemp("train-corpus")
    specs = [
        SyntheticSpec(angle_deg=(10, 30, 50, 70, 90)[k % 5], rng_seed=6000 + k)
        for k in range(20)
    ]
    return write_dataset(specs, root, split="train")
