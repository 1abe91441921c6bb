"""Client side of the segmentation-backend protocol.

A backend is a child process speaking newline-delimited JSON over its
standard streams: one handshake line on startup, then strictly lock-step
request/response lines (one object per line, UTF-8, flushed). Masks
travel as run-length integer arrays. Classical and neural backends speak
the identical protocol, so the harness benchmarks them identically.

Handshake:  {"protocol_version": 1, "backend_name": str, "modes": [str, ...]}
Request:    {"id": str, "image_path": str, "mode": str, "prompt": obj|null,
             "multimask": bool, "params": obj}
Response:   {"id": str, "width": int, "height": int, "rle": [int, ...],
             "latency_s": float}
Error:      {"id": str|null, "error": str}
"""

from __future__ import annotations

import json
import logging
import queue
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import pngio
from .dataset import ManifestEntry
from .imaging import MalformedRunsError, RunLengthEncoding, rle_decode
from .metrics import DEFAULT_TAU, EvalRecord, dice, iou, pass_fail
from .prompting import Prompt, prompt_to_json

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
HANDSHAKE_TIMEOUT_S = 30.0
REQUEST_TIMEOUT_S = 120.0

MODE_AUTO = "auto"
MODE_BOX = "box"
MODE_POINT = "point"
MODE_CLASSICAL = "classical-threshold"
MODE_CLASSICAL_MEDIAN = "classical-threshold-median"
PROMPTED_MODES = (MODE_AUTO, MODE_BOX, MODE_POINT)

# Protocol mode -> record mode used in reports.
RECORD_MODES = {
    MODE_AUTO: "auto",
    MODE_BOX: "box",
    MODE_POINT: "point",
    MODE_CLASSICAL: "threshold",
    MODE_CLASSICAL_MEDIAN: "threshold+median",
}


class ProtocolError(RuntimeError):
    """The backend broke the wire contract (bad handshake, orphan id, EOF)."""


class BackendError(RuntimeError):
    """The backend reported a per-request error line."""


@dataclass(frozen=True)
class BackendHandshake:
    protocol_version: int
    backend_name: str
    modes: tuple[str, ...]


@dataclass(frozen=True)
class SegmentRequest:
    id: str
    image_path: str
    mode: str
    prompt: Optional[Prompt] = None
    multimask: bool = False
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "image_path": self.image_path,
            "mode": self.mode,
            "prompt": prompt_to_json(self.prompt) if self.prompt is not None else None,
            "multimask": self.multimask,
            "params": self.params,
        }


@dataclass(frozen=True)
class SegmentResponse:
    id: str
    width: int
    height: int
    runs: tuple[int, ...]
    latency_s: float

    def mask(self):
        return rle_decode(RunLengthEncoding(self.width, self.height, self.runs))


def _parse_handshake(line: str) -> BackendHandshake:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        raise ProtocolError(f"handshake is not JSON: {line[:200]!r}")
    if not isinstance(obj, dict):
        raise ProtocolError(f"handshake is not an object: {line[:200]!r}")
    version = obj.get("protocol_version")
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"protocol version mismatch: backend speaks {version!r}, harness speaks {PROTOCOL_VERSION}")
    modes = obj.get("modes")
    if not isinstance(modes, list) or not modes:
        raise ProtocolError(f"handshake advertises no modes: {line[:200]!r}")
    return BackendHandshake(
        protocol_version=int(version),
        backend_name=str(obj.get("backend_name", "")),
        modes=tuple(str(m) for m in modes),
    )


class BackendSession:
    """One child backend process, strictly one request in flight.

    Sessions are single-owner; run several sessions for parallelism. Once
    a protocol error or timeout occurs the session is broken for good.
    """

    def __init__(
        self,
        command: Sequence[str],
        handshake_timeout: float = HANDSHAKE_TIMEOUT_S,
        request_timeout: float = REQUEST_TIMEOUT_S,
    ):
        self.command = list(command)
        self.request_timeout = request_timeout
        self.broken = False
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProtocolError(f"cannot spawn backend {self.command}: {exc}") from exc

        self._lines: queue.Queue[Optional[str]] = queue.Queue()
        self._reader = threading.Thread(target=self._pump_stdout, daemon=True)
        self._reader.start()

        line = self._next_line(handshake_timeout, "handshake")
        self.handshake = _parse_handshake(line)

    def _pump_stdout(self) -> None:
        try:
            for line in self._proc.stdout:
                self._lines.put(line.rstrip("\n"))
        finally:
            self._lines.put(None)

    def _next_line(self, timeout: float, what: str) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            self.broken = True
            self._kill()
            raise ProtocolError(f"timed out after {timeout:.0f}s waiting for {what} from {self.command}")
        if line is None:
            self.broken = True
            raise ProtocolError(f"backend exited while harness waited for {what}")
        return line

    def segment(self, request: SegmentRequest) -> SegmentResponse:
        """Send one request and wait for its response or error line."""
        if self.broken:
            raise ProtocolError("session is broken")
        if request.mode not in self.handshake.modes:
            raise BackendError(
                f"mode {request.mode!r} not supported by {self.handshake.backend_name!r} "
                f"(advertises {list(self.handshake.modes)})"
            )
        payload = json.dumps(request.to_json())
        try:
            self._proc.stdin.write(payload + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.broken = True
            raise ProtocolError(f"backend pipe closed: {exc}") from exc

        line = self._next_line(self.request_timeout, f"response to {request.id!r}")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            self.broken = True
            raise ProtocolError(f"response is not JSON: {line[:200]!r}")
        if not isinstance(obj, dict):
            self.broken = True
            raise ProtocolError(f"response is not an object: {line[:200]!r}")
        if obj.get("id") != request.id:
            self.broken = True
            raise ProtocolError(f"orphan response id {obj.get('id')!r}, expected {request.id!r}")
        if "error" in obj:
            raise BackendError(str(obj["error"]))
        try:
            response = SegmentResponse(
                id=str(obj["id"]),
                width=int(obj["width"]),
                height=int(obj["height"]),
                runs=tuple(int(r) for r in obj["rle"]),
                latency_s=float(obj["latency_s"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            self.broken = True
            raise ProtocolError(f"malformed response fields: {exc}") from exc
        return response

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._kill()
        self._reader.join(timeout=5)

    def _kill(self) -> None:
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self) -> "BackendSession":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def spawn_backend(command: Sequence[str], **kwargs) -> BackendSession:
    """Start a backend child process and validate its handshake."""
    return BackendSession(command, **kwargs)


def segment_one(session: BackendSession, request: SegmentRequest) -> SegmentResponse:
    """Run one request; also checks the decoded mask matches the image size."""
    response = session.segment(request)
    try:
        response.mask()
    except MalformedRunsError as exc:
        raise ProtocolError(f"response RLE invalid for {request.id!r}: {exc}") from exc
    width, height = pngio.image_size(request.image_path)
    if (response.width, response.height) != (width, height):
        raise ProtocolError(
            f"mask is {response.width}x{response.height}, image {request.id!r} is {width}x{height}"
        )
    return response


def build_request(entry: ManifestEntry, mode: str, prompt: Optional[Prompt], params: Optional[dict] = None) -> SegmentRequest:
    merged = dict(params or {})
    if entry.mask_path is not None:
        # Lets oracle backends echo the ground truth; real backends ignore it.
        merged.setdefault("mask_path", str(entry.mask_path))
    return SegmentRequest(
        id=entry.image_id,
        image_path=str(entry.image_path),
        mode=mode,
        prompt=prompt if mode in PROMPTED_MODES else None,
        multimask=False,
        params=merged,
    )


def evaluate_entry(
    session: BackendSession,
    entry: ManifestEntry,
    mode: str,
    model: str,
    prompt: Optional[Prompt],
    tau: float = DEFAULT_TAU,
    params: Optional[dict] = None,
) -> EvalRecord:
    """Segment one manifest entry and score it against its ground truth.

    Any failure becomes a failed record (iou 0, error note); only the
    session-level breakage decision is left to the caller via
    ``session.broken``.
    """
    record_mode = RECORD_MODES.get(mode, mode)

    def failed(note: str) -> EvalRecord:
        return EvalRecord(
            image_id=entry.image_id,
            angle_deg=entry.angle_deg,
            colorspace=entry.colorspace,
            mode=record_mode,
            model=model,
            iou=0.0,
            dice=0.0,
            passed=False,
            latency_s=0.0,
            error=note,
        )

    if entry.mask_path is None:
        return failed("no ground-truth mask in manifest")
    try:
        response = segment_one(session, build_request(entry, mode, prompt, params))
    except BackendError as exc:
        return failed(f"backend error: {exc}")
    except ProtocolError as exc:
        return failed(f"protocol error: {exc}")

    predicted = response.mask()
    truth = pngio.load_mask(entry.mask_path)
    if predicted.shape != truth.shape:
        return failed(f"mask shape {predicted.shape} does not match ground truth {truth.shape}")
    iou_value = iou(predicted, truth)
    return EvalRecord(
        image_id=entry.image_id,
        angle_deg=entry.angle_deg,
        colorspace=entry.colorspace,
        mode=record_mode,
        model=model,
        iou=iou_value,
        dice=dice(predicted, truth),
        passed=pass_fail(iou_value, tau),
        latency_s=response.latency_s,
    )


def run_batch(
    session: BackendSession,
    entries: Sequence[ManifestEntry],
    mode: str,
    model: str,
    prompts: Sequence[Optional[Prompt]],
    tau: float = DEFAULT_TAU,
    params: Optional[dict] = None,
) -> list[EvalRecord]:
    """Evaluate entries in manifest order on a single session.

    One failing image never aborts the batch; if the session itself dies,
    the remaining entries become failed records.
    """
    if len(prompts) != len(entries):
        raise ValueError(f"{len(prompts)} prompts for {len(entries)} entries")
    records = []
    for entry, prompt in zip(entries, prompts):
        if session.broken:
            records.append(
                evaluate_entry_broken(entry, RECORD_MODES.get(mode, mode), model, "session broken earlier in batch")
            )
            continue
        records.append(evaluate_entry(session, entry, mode, model, prompt, tau=tau, params=params))
    return records


def evaluate_entry_broken(entry: ManifestEntry, record_mode: str, model: str, note: str) -> EvalRecord:
    return EvalRecord(
        image_id=entry.image_id,
        angle_deg=entry.angle_deg,
        colorspace=entry.colorspace,
        mode=record_mode,
        model=model,
        iou=0.0,
        dice=0.0,
        passed=False,
        latency_s=0.0,
        error=note,
    )
