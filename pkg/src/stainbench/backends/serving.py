"""Server-side scaffolding for protocol backends.

A backend announces itself with one handshake line, then answers each
request line with exactly one response or error line. Bad input of any
kind must produce an error line, never a crash or a missing reply.
"""

from __future__ import annotations

import json
import sys
from typing import Callable, Sequence

from ..bridge import PROTOCOL_VERSION


def serve_loop(backend_name: str, modes: Sequence[str], handle: Callable[[dict], dict]) -> None:
    """Run the line-oriented request loop on stdin/stdout.

    ``handle`` receives the parsed request object and returns the response
    fields (width/height/rle/latency_s); any exception it raises becomes
    an error line for that request id.
    """
    out = sys.stdout
    _emit(out, {"protocol_version": PROTOCOL_VERSION, "backend_name": backend_name, "modes": list(modes)})

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            _emit(out, {"id": None, "error": f"request is not JSON: {exc}"})
            continue
        if not isinstance(request, dict):
            _emit(out, {"id": None, "error": "request is not an object"})
            continue
        request_id = request.get("id")
        try:
            mode = request.get("mode")
            if mode not in modes:
                raise ValueError(f"unsupported mode {mode!r}")
            response = handle(request)
        except Exception as exc:
            _emit(out, {"id": request_id, "error": f"{type(exc).__name__}: {exc}"})
            continue
        response["id"] = request_id
        _emit(out, response)


def _emit(out, obj: dict) -> None:
    out.write(json.dumps(obj) + "\n")
    out.flush()
