import sys

import numpy as np
import pytest

from stainbench import pngio
from stainbench.bridge import (
    MODE_BOX,
    MODE_CLASSICAL,
    MODE_CLASSICAL_MEDIAN,
    BackendError,
    ProtocolError,
    SegmentRequest,
    build_request,
    run_batch,
    segment_one,
    spawn_backend,
)
from stainbench.conformance import ConformanceFailure, run_conformance_suite
from stainbench.dataset import SyntheticSpec, generate_droplet, load_manifest, write_dataset
from stainbench.metrics import iou
from stainbench.prompting import full_image_box

CLASSICAL_CMD = [sys.executable, "-m", "stainbench.backends.classical"]
ECHO_CMD = [sys.executable, "-m", "stainbench.backends.echo"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    specs = [SyntheticSpec(angle_deg=50, rng_seed=300 + k) for k in range(10)]
    manifest = write_dataset(specs, root)
    return load_manifest(manifest)


def script_backend(tmp_path, body):
    path = tmp_path / "fake_backend.py"
    path.write_text(body)
    return [sys.executable, str(path)]


class TestSpawnAndHandshake:
    def test_classical_advertises_its_modes(self):
        with spawn_backend(CLASSICAL_CMD) as session:
            assert session.handshake.protocol_version == 1
            assert MODE_CLASSICAL in session.handshake.modes
            assert MODE_CLASSICAL_MEDIAN in session.handshake.modes

    def test_version_mismatch_rejected(self, tmp_path):
        cmd = script_backend(
            tmp_path,
            'import json,sys\n'
            'print(json.dumps({"protocol_version": 2, "backend_name": "bad", "modes": ["box"]}), flush=True)\n'
            'sys.stdin.read()\n',
        )
        with pytest.raises(ProtocolError, match="version"):
            spawn_backend(cmd)

    def test_non_json_handshake_names_the_bytes(self, tmp_path):
        cmd = script_backend(tmp_path, 'import sys\nprint("hello world", flush=True)\nsys.stdin.read()\n')
        with pytest.raises(ProtocolError, match="hello world"):
            spawn_backend(cmd)

    def test_empty_mode_list_rejected(self, tmp_path):
        cmd = script_backend(
            tmp_path,
            'import json,sys\n'
            'print(json.dumps({"protocol_version": 1, "backend_name": "bad", "modes": []}), flush=True)\n'
            'sys.stdin.read()\n',
        )
        with pytest.raises(ProtocolError, match="modes"):
            spawn_backend(cmd)

    def test_nonexistent_executable(self):
        with pytest.raises(ProtocolError, match="spawn"):
            spawn_backend(["/no/such/binary"])


class TestSegmentOne:
    def test_classical_segments_a_clean_droplet(self, corpus):
        entry = corpus[0]
        truth = pngio.load_mask(entry.mask_path)
        with spawn_backend(CLASSICAL_CMD) as session:
            response = segment_one(session, build_request(entry, MODE_CLASSICAL, None))
            assert iou(response.mask(), truth) >= 0.95

    def test_echo_returns_exact_ground_truth(self, corpus):
        entry = corpus[0]
        truth = pngio.load_mask(entry.mask_path)
        with spawn_backend(ECHO_CMD) as session:
            response = segment_one(session, build_request(entry, MODE_BOX, full_image_box(96, 96)))
            assert iou(response.mask(), truth) == 1.0
            assert response.id == entry.image_id

    def test_unsupported_mode_rejected_before_send(self, corpus):
        with spawn_backend(CLASSICAL_CMD) as session:
            with pytest.raises(BackendError, match="not supported"):
                session.segment(build_request(corpus[0], "auto", None))

    def test_orphan_response_id_is_protocol_error(self, tmp_path, corpus):
        cmd = script_backend(
            tmp_path,
            'import json,sys\n'
            'print(json.dumps({"protocol_version": 1, "backend_name": "liar", "modes": ["classical-threshold"]}), flush=True)\n'
            'for line in sys.stdin:\n'
            '    print(json.dumps({"id": "wrong", "width": 1, "height": 1, "rle": [1], "latency_s": 0.0}), flush=True)\n',
        )
        with spawn_backend(cmd) as session:
            with pytest.raises(ProtocolError, match="orphan"):
                session.segment(build_request(corpus[0], MODE_CLASSICAL, None))
            assert session.broken

    def test_request_timeout_breaks_session(self, tmp_path, corpus):
        cmd = script_backend(
            tmp_path,
            'import json,sys,time\n'
            'print(json.dumps({"protocol_version": 1, "backend_name": "slow", "modes": ["classical-threshold"]}), flush=True)\n'
            'for line in sys.stdin:\n'
            '    time.sleep(60)\n',
        )
        with spawn_backend(cmd, request_timeout=0.5) as session:
            with pytest.raises(ProtocolError, match="timed out"):
                session.segment(build_request(corpus[0], MODE_CLASSICAL, None))
            assert session.broken


class TestRunBatch:
    def test_full_batch_in_manifest_order(self, corpus):
        prompts = [None] * len(corpus)
        with spawn_backend(CLASSICAL_CMD) as session:
            records = run_batch(session, corpus, MODE_CLASSICAL, "classical", prompts)
        assert [r.image_id for r in records] == [e.image_id for e in corpus]
        assert all(r.passed for r in records)
        assert all(r.mode == "threshold" for r in records)

    def test_empty_manifest(self):
        with spawn_backend(CLASSICAL_CMD) as session:
            assert run_batch(session, [], MODE_CLASSICAL, "classical", []) == []

    def test_one_failure_does_not_poison_the_batch(self, tmp_path, corpus):
        # route one entry at a broken mask path; echo fails on it only
        broken = corpus[3]
        broken_entry = type(broken)(
            image_id=broken.image_id,
            image_path=broken.image_path,
            mask_path=tmp_path / "missing-mask.png",
            angle_deg=broken.angle_deg,
            colorspace=broken.colorspace,
            split=broken.split,
        )
        entries = list(corpus)
        entries[3] = broken_entry
        prompts = [full_image_box(96, 96)] * len(entries)
        with spawn_backend(ECHO_CMD) as session:
            records = run_batch(session, entries, MODE_BOX, "default", prompts)
        assert len(records) == len(entries)
        failed = [r for r in records if r.error]
        assert [r.image_id for r in failed] == [broken.image_id]
        assert sum(r.passed for r in records) == len(entries) - 1

    def test_latency_copied_from_response(self, corpus):
        with spawn_backend(ECHO_CMD) as session:
            records = run_batch(session, corpus[:2], MODE_BOX, "default", [full_image_box(96, 96)] * 2)
        assert all(r.latency_s >= 0 for r in records)

    def test_entry_without_mask_fails_cleanly(self, corpus):
        entry = corpus[0]
        unlabeled = type(entry)(
            image_id=entry.image_id,
            image_path=entry.image_path,
            mask_path=None,
            angle_deg=entry.angle_deg,
            colorspace=entry.colorspace,
            split=entry.split,
        )
        with spawn_backend(CLASSICAL_CMD) as session:
            records = run_batch(session, [unlabeled], MODE_CLASSICAL, "classical", [None])
        assert records[0].error == "no ground-truth mask in manifest"
        assert not records[0].passed


class TestConformance:
    def test_classical_backend_conforms(self, tmp_path):
        handshake = run_conformance_suite(CLASSICAL_CMD, tmp_path)
        assert handshake.backend_name == "classical"

    def test_echo_backend_conforms(self, tmp_path):
        handshake = run_conformance_suite(ECHO_CMD, tmp_path)
        assert handshake.backend_name == "echo-oracle"

    def test_suite_catches_a_crashing_backend(self, tmp_path):
        cmd = script_backend(
            tmp_path,
            'import json,sys\n'
            'print(json.dumps({"protocol_version": 1, "backend_name": "fragile", "modes": ["box"]}), flush=True)\n'
            'sys.stdin.readline()\n'
            'sys.exit(3)\n',
        )
        with pytest.raises(ConformanceFailure):
            run_conformance_suite(cmd, tmp_path)


class TestClassicalModes:
    def test_median_mode_accepts_radius_param(self, corpus):
        entry = corpus[0]
        truth = pngio.load_mask(entry.mask_path)
        with spawn_backend(CLASSICAL_CMD) as session:
            response = segment_one(
                session,
                SegmentRequest(
                    id="median-run",
                    image_path=str(entry.image_path),
                    mode=MODE_CLASSICAL_MEDIAN,
                    params={"median_radius": 2},
                ),
            )
            assert iou(response.mask(), truth) >= 0.9

    def test_auto_mode_is_an_error_line(self, corpus):
        entry = corpus[0]
        with spawn_backend(CLASSICAL_CMD) as session:
            # force the request onto the wire despite the local guard
            session.handshake = type(session.handshake)(
                protocol_version=1, backend_name="classical", modes=("auto",)
            )
            with pytest.raises(BackendError, match="unsupported mode"):
                session.segment(SegmentRequest(id="x", image_path=str(entry.image_path), mode="auto"))
