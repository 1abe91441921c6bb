"""Shared protocol-conformance checks for segmentation backends.

Any backend claiming to speak the wire protocol must pass this suite:
valid handshake, one reply per request, error lines instead of crashes on
bad input, and full recovery after a failed request. The suite drives the
child process at the raw line level on purpose, independent of the
convenience client in :mod:`stainbench.bridge`.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from pathlib import Path
from typing import Optional, Sequence

from . import pngio
from .bridge import BackendHandshake, MODE_AUTO, MODE_BOX, MODE_POINT, _parse_handshake
from .dataset import SyntheticSpec, generate_droplet
from .imaging import RunLengthEncoding, rle_decode
from .prompting import AutoGridPrompt, center_point, full_image_box, prompt_to_json


class ConformanceFailure(AssertionError):
    pass


class _RawBackend:
    def __init__(self, command: Sequence[str], timeout: float):
        self.timeout = timeout
        self.proc = subprocess.Popen(
            list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )
        self._lines: queue.Queue[Optional[str]] = queue.Queue()
        threading.Thread(target=self._pump, daemon=True).start()

    def _pump(self) -> None:
        try:
            for line in self.proc.stdout:
                self._lines.put(line.rstrip("\n"))
        finally:
            self._lines.put(None)

    def send_line(self, line: str) -> None:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def read_line(self, what: str) -> str:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ConformanceFailure(f"backend sent nothing within {self.timeout:.0f}s while harness waited for {what}")
        if line is None:
            raise ConformanceFailure(f"backend exited instead of answering {what}")
        return line

    def read_json(self, what: str) -> dict:
        line = self.read_line(what)
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise ConformanceFailure(f"{what}: line is not JSON: {line[:200]!r}")
        if not isinstance(obj, dict):
            raise ConformanceFailure(f"{what}: line is not an object: {line[:200]!r}")
        return obj

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


def _prompt_for(mode: str, width: int, height: int) -> Optional[dict]:
    if mode == MODE_BOX:
        return prompt_to_json(full_image_box(width, height))
    if mode == MODE_POINT:
        return prompt_to_json(center_point(width, height))
    if mode == MODE_AUTO:
        return prompt_to_json(AutoGridPrompt(points_per_side=2))
    return None


def run_conformance_suite(command: Sequence[str], workdir: Path, timeout: float = 60.0) -> BackendHandshake:
    """Drive one backend through the conformance checks.

    Raises :class:`ConformanceFailure` describing the first violated
    contract; returns the parsed handshake on success.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSpec(angle_deg=50, rng_seed=424242, width=64, height=64, droplet_length_px=18)
    img, mask = generate_droplet(spec)
    image_path = workdir / "conformance-image.png"
    mask_path = workdir / "conformance-mask.png"
    pngio.save_image(image_path, img)
    pngio.save_mask(mask_path, mask)

    backend = _RawBackend(command, timeout)
    try:
        handshake = _parse_handshake(backend.read_line("handshake"))

        mode = handshake.modes[0]
        base_request = {
            "image_path": str(image_path),
            "mode": mode,
            "prompt": _prompt_for(mode, spec.width, spec.height),
            "multimask": False,
            "params": {"mask_path": str(mask_path)},
        }

        # Garbage input must yield an error line, not a crash.
        backend.send_line("this is not json")
        reply = backend.read_json("reply to a malformed line")
        if "error" not in reply:
            raise ConformanceFailure(f"malformed line was not rejected: {reply!r}")

        # Unsupported mode must be refused per request.
        backend.send_line(json.dumps({**base_request, "id": "conf-bad-mode", "mode": "no-such-mode", "prompt": None}))
        reply = backend.read_json("reply to an unsupported mode")
        if "error" not in reply:
            raise ConformanceFailure(f"unsupported mode was not rejected: {reply!r}")
        if reply.get("id") != "conf-bad-mode":
            raise ConformanceFailure(f"error line id {reply.get('id')!r} does not match request id")

        # Unreadable image must fail this request only.
        backend.send_line(json.dumps({**base_request, "id": "conf-bad-image", "image_path": str(workdir / "missing.png")}))
        reply = backend.read_json("reply to a missing image")
        if "error" not in reply:
            raise ConformanceFailure(f"missing image was not rejected: {reply!r}")
        if reply.get("id") != "conf-bad-image":
            raise ConformanceFailure(f"error line id {reply.get('id')!r} does not match request id")

        # After all that abuse a valid request must still succeed.
        backend.send_line(json.dumps({**base_request, "id": "conf-ok"}))
        reply = backend.read_json("reply to a valid request")
        if "error" in reply:
            raise ConformanceFailure(f"valid request failed: {reply['error']!r}")
        if reply.get("id") != "conf-ok":
            raise ConformanceFailure(f"response id {reply.get('id')!r} does not match request id")
        if (reply.get("width"), reply.get("height")) != (spec.width, spec.height):
            raise ConformanceFailure(
                f"mask is {reply.get('width')}x{reply.get('height')}, image is {spec.width}x{spec.height}"
            )
        runs = reply.get("rle")
        if not isinstance(runs, list):
            raise ConformanceFailure(f"rle field is {type(runs).__name__}, expected list")
        rle_decode(RunLengthEncoding(spec.width, spec.height, tuple(int(r) for r in runs)))
        latency = reply.get("latency_s")
        if not isinstance(latency, (int, float)) or latency < 0:
            raise ConformanceFailure(f"latency_s {latency!r} is not a non-negative number")

        return handshake
    finally:
        backend.close()
