import csv
import sys

import numpy as np
import pytest

from stainbench import pngio
from stainbench.cli import main
from stainbench.dataset import SyntheticSpec, generate_droplet, load_manifest
from stainbench.metrics import iou


def run_cli(*argv):
    return main([str(a) for a in argv])


def read_records(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture()
def small_manifest(tmp_path):
    code = run_cli("gen-synth", "--out", tmp_path / "data", "--angles", "30,90", "--seeds-per-angle", "3")
    assert code == 0
    return tmp_path / "data" / "manifest.csv"


class TestGenSynth:
    def test_nine_by_ten_white(self, tmp_path, capsys):
        assert run_cli("gen-synth", "--out", tmp_path / "d") == 0
        manifest = tmp_path / "d" / "manifest.csv"
        assert str(manifest) in capsys.readouterr().out
        assert len(load_manifest(manifest)) == 90

    def test_gray_variants_double_the_corpus(self, tmp_path):
        assert run_cli("gen-synth", "--out", tmp_path / "d", "--gray-variants") == 0
        entries = load_manifest(tmp_path / "d" / "manifest.csv")
        assert len(entries) == 180
        assert sum(e.colorspace == "gray" for e in entries) == 90

    def test_zero_seeds_gives_header_only(self, tmp_path):
        assert run_cli("gen-synth", "--out", tmp_path / "d", "--seeds-per-angle", "0") == 0
        assert load_manifest(tmp_path / "d" / "manifest.csv") == []

    def test_textured_background(self, tmp_path):
        assert run_cli("gen-synth", "--out", tmp_path / "d", "--background", "textured",
                       "--angles", "90", "--seeds-per-angle", "1") == 0
        entry = load_manifest(tmp_path / "d" / "manifest.csv")[0]
        img = pngio.load_image(entry.image_path)
        background = img[:4, :4, 0]
        assert background.std() > 0  # not flat white

    def test_bad_angle_is_a_cli_error(self, tmp_path):
        assert run_cli("gen-synth", "--out", tmp_path / "d", "--angles", "45") == 2


class TestPrepareGt:
    def test_synthetic_frames_recovered(self, tmp_path):
        frames = tmp_path / "frames"
        truths = {}
        for k in range(10):
            spec = SyntheticSpec(angle_deg=50, rng_seed=800 + k)
            img, mask = generate_droplet(spec)
            name = f"a50-s{800 + k}"
            pngio.save_image(frames / f"{name}.png", img)
            truths[name] = mask
        assert run_cli("prepare-gt", "--images", frames, "--out", tmp_path / "gt") == 0
        entries = load_manifest(tmp_path / "gt" / "manifest.csv")
        assert len(entries) == 10
        assert all(e.angle_deg == 50 for e in entries)
        scores = [iou(pngio.load_mask(e.mask_path), truths[e.image_id]) for e in entries]
        assert float(np.mean(scores)) >= 0.95

    def test_empty_dir_is_fine(self, tmp_path):
        (tmp_path / "frames").mkdir()
        assert run_cli("prepare-gt", "--images", tmp_path / "frames", "--out", tmp_path / "gt") == 0
        assert load_manifest(tmp_path / "gt" / "manifest.csv") == []

    def test_unreadable_file_listed(self, tmp_path, capsys):
        frames = tmp_path / "frames"
        frames.mkdir()
        (frames / "broken.png").write_bytes(b"not a png")
        img, _ = generate_droplet(SyntheticSpec(angle_deg=50, rng_seed=1))
        pngio.save_image(frames / "a50-good.png", img)
        assert run_cli("prepare-gt", "--images", frames, "--out", tmp_path / "gt") == 1
        assert "broken.png" in capsys.readouterr().err
        assert len(load_manifest(tmp_path / "gt" / "manifest.csv")) == 1


class TestGrayVariantsCommand:
    def test_writes_combined_manifest(self, tmp_path, small_manifest):
        assert run_cli("gray-variants", "--manifest", small_manifest, "--out", tmp_path / "gray") == 0
        entries = load_manifest(tmp_path / "gray" / "manifest.csv")
        assert len(entries) == 12
        assert sum(e.colorspace == "gray" for e in entries) == 6


class TestBench:
    def test_classical_marks_neural_columns_absent(self, tmp_path, small_manifest):
        out = tmp_path / "reports"
        assert run_cli("bench", "--manifest", small_manifest, "--out", out, "--jobs", "1") == 0
        table4 = (out / "table4.md").read_text()
        assert "n/a" in table4
        records = read_records(out / "records.csv")
        assert len(records) == 12  # 6 entries x 2 classical modes
        assert {r["mode"] for r in records} == {"threshold", "threshold+median"}
        assert all(r["model"] == "classical" for r in records)

    def test_echo_backend_scores_perfectly(self, tmp_path, small_manifest):
        out = tmp_path / "reports"
        echo = f"echo={sys.executable} -m stainbench.backends.echo"
        assert run_cli("bench", "--manifest", small_manifest, "--out", out, "--backend", echo, "--jobs", "2") == 0
        records = read_records(out / "records.csv")
        assert len(records) == 18  # 6 entries x 3 prompted modes
        assert all(r["passed"] == "1" for r in records)
        table1 = (out / "table1.md").read_text()
        assert "100.0" in table1

    def test_spawn_failure_is_nonzero_and_marked(self, tmp_path, small_manifest):
        out = tmp_path / "reports"
        assert run_cli("bench", "--manifest", small_manifest, "--out", out,
                       "--backend", "ghost=/no/such/backend") == 1
        assert "INCOMPLETE" in (out / "table1.md").read_text()

    def test_reproducible_modulo_latency(self, tmp_path, small_manifest):
        outs = []
        for name in ("one", "two"):
            out = tmp_path / name
            assert run_cli("bench", "--manifest", small_manifest, "--out", out, "--seed", "7", "--jobs", "1") == 0
            rows = read_records(out / "records.csv")
            for row in rows:
                row.pop("latency_s")
            outs.append(rows)
        assert outs[0] == outs[1]

    def test_toml_config_with_flag_override(self, tmp_path, small_manifest):
        config = tmp_path / "run.toml"
        config.write_text(
            f'manifest = "{small_manifest}"\n'
            'tau = 0.9\n'
            'jobs = 1\n'
            f'out = "{tmp_path / "from-file"}"\n'
            '[[backends]]\n'
            'label = "classical"\n'
            f'command = ["{sys.executable}", "-m", "stainbench.backends.classical"]\n'
            'modes = ["classical-threshold"]\n'
        )
        out = tmp_path / "from-flag"
        assert run_cli("bench", "--config", config, "--out", out) == 0
        assert not (tmp_path / "from-file").exists()
        records = read_records(out / "records.csv")
        assert {r["mode"] for r in records} == {"threshold"}

    def test_missing_manifest_is_cli_error(self, tmp_path):
        assert run_cli("bench", "--out", tmp_path / "r") == 2
