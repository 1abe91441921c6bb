import json

import pytest
import torch

from stainbench_neural.checkpoints import (
    STATE_FINETUNED,
    STATE_PRETRAINED,
    load_checkpoint,
    save_checkpoint,
    sidecar_path,
)
from stainbench_neural.model import SMALLEST_VARIANT, build_model


def test_save_load_round_trip(tmp_path):
    model = build_model(SMALLEST_VARIANT)
    path = tmp_path / "m.pt"
    ref = save_checkpoint(model, path, variant=SMALLEST_VARIANT, state=STATE_PRETRAINED)
    assert ref.path == path and ref.state == STATE_PRETRAINED

    loaded, loaded_ref = load_checkpoint(path)
    assert loaded_ref.variant == SMALLEST_VARIANT
    for a, b in zip(model.state_dict().values(), loaded.state_dict().values()):
        assert torch.equal(a, b)


def test_sidecar_records_provenance(tmp_path):
    model = build_model(SMALLEST_VARIANT)
    path = tmp_path / "m.pt"
    save_checkpoint(model, path, variant=SMALLEST_VARIANT, state=STATE_FINETUNED)
    side = json.loads(sidecar_path(path).read_text())
    assert set(side) == {"sha256", "variant", "state"}
    assert side["state"] == STATE_FINETUNED
    assert len(side["sha256"]) == 64


def test_corrupted_checkpoint_detected(tmp_path):
    model = build_model(SMALLEST_VARIANT)
    path = tmp_path / "m.pt"
    save_checkpoint(model, path, variant=SMALLEST_VARIANT, state=STATE_PRETRAINED)
    with open(path, "r+b") as fh:
        fh.seek(100)
        fh.write(b"\x00\x01\x02\x03")
    with pytest.raises(ValueError, match="hash mismatch"):
        load_checkpoint(path)


def test_missing_sidecar_rejected(tmp_path):
    model = build_model(SMALLEST_VARIANT)
    path = tmp_path / "m.pt"
    save_checkpoint(model, path, variant=SMALLEST_VARIANT, state=STATE_PRETRAINED)
    sidecar_path(path).unlink()
    with pytest.raises(FileNotFoundError, match="sidecar"):
        load_checkpoint(path)


def test_missing_checkpoint_rejected(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "nope.pt")
