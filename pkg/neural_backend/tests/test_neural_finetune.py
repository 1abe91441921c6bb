import json
from pathlib import Path

import numpy as np
import pytest

from stainbench import pngio
from stainbench.dataset import SyntheticSpec, generate_droplet, load_manifest
from stainbench.metrics import iou
from stainbench_neural.checkpoints import STATE_PRETRAINED, load_checkpoint, save_checkpoint
from stainbench_neural.finetune import FinetuneConfig, finetune, read_training_pairs
from stainbench_neural.model import build_model
from stainbench_neural.predictor import Predictor


class TestReadTrainingPairs:
    def test_reads_labeled_manifest(self, train_corpus_20):
        pairs = read_training_pairs(train_corpus_20)
        assert len(pairs) == 20
        assert all(img.is_file() and mask.is_file() for _, img, mask in pairs)

    def test_row_without_mask_fails_before_training(self, tmp_path, train_corpus_20):
        text = train_corpus_20.read_text().splitlines()
        cells = text[1].split(",")
        cells[2] = ""
        text[1] = ",".join(cells)
        bad = tmp_path / "manifest.csv"
        bad.write_text("\n".join(text) + "\n")
        with pytest.raises(ValueError, match="no ground-truth mask"):
            read_training_pairs(bad)

    def test_unloadable_image_is_named(self, tmp_path, train_corpus_20):
        entries = load_manifest(train_corpus_20)
        entries[0].image_path.write_bytes(b"junk")
        try:
            with pytest.raises(ValueError, match="unloadable"):
                read_training_pairs(train_corpus_20)
        finally:
            img, _ = generate_droplet(
                SyntheticSpec(angle_deg=entries[0].angle_deg, rng_seed=6000)
            )
            pngio.save_image(entries[0].image_path, img)

    def test_empty_manifest_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("image_id,image_path,mask_path,angle_deg,colorspace,split\n")
        with pytest.raises(ValueError, match="no training pairs"):
            read_training_pairs(path)


class TestFinetune:
    def test_loss_decreases_and_artifacts_exist(self, base_checkpoint, train_corpus_20, tmp_path):
        out = tmp_path / "tuned.pt"
        config = FinetuneConfig(train_manifest=train_corpus_20, epochs=2, learning_rate=1e-3, seed=0)
        ref, log_path = finetune(base_checkpoint, config, out)

        assert ref.state == "finetuned"
        assert out.is_file() and Path(str(out) + ".json").is_file()
        payload = json.loads(log_path.read_text())
        losses = [e["mean_loss"] for e in payload["epoch_mean_loss"]]
        assert len(losses) == 2
        assert losses[-1] < losses[0]

    def test_deterministic_given_seed(self, base_checkpoint, train_corpus_20, tmp_path):
        losses = []
        for name in ("a", "b"):
            config = FinetuneConfig(train_manifest=train_corpus_20, epochs=1, learning_rate=1e-3, seed=9)
            _, log_path = finetune(base_checkpoint, config, tmp_path / f"{name}.pt")
            losses.append(json.loads(log_path.read_text())["epoch_mean_loss"])
        assert losses[0] == losses[1]

    def test_finetuned_model_beats_base_on_stains(self, base_checkpoint, train_corpus_20, tmp_path):
        config = FinetuneConfig(train_manifest=train_corpus_20, epochs=3, learning_rate=1e-3, seed=0)
        finetune(base_checkpoint, config, tmp_path / "tuned.pt")

        def mean_box_iou(path):
            model, _ = load_checkpoint(path)
            predictor = Predictor(model)
            scores = []
            for k in range(8):
                img, truth = generate_droplet(
                    SyntheticSpec(angle_deg=(20, 40, 60, 80)[k % 4], rng_seed=9000 + k)
                )
                mask, _ = predictor.predict_box(img, 0, 0, img.shape[1], img.shape[0])
                scores.append(iou(mask, truth))
            return float(np.mean(scores))

        assert mean_box_iou(tmp_path / "tuned.pt") >= mean_box_iou(base_checkpoint)

    def test_rejects_non_smallest_variant(self, train_corpus_20, tmp_path):
        big = build_model("small")
        path = tmp_path / "big.pt"
        save_checkpoint(big, path, variant="small", state=STATE_PRETRAINED)
        config = FinetuneConfig(train_manifest=train_corpus_20, epochs=1)
        with pytest.raises(ValueError, match="smallest variant"):
            finetune(path, config, tmp_path / "out.pt")

    def test_rejects_bad_config(self, train_corpus_20):
        with pytest.raises(ValueError):
            FinetuneConfig(train_manifest=train_corpus_20, epochs=0).validate()
        with pytest.raises(ValueError):
            FinetuneConfig(train_manifest=train_corpus_20, learning_rate=0.0).validate()
