"""Request handling and the stdio / HTTP transports.

A malformed request never kills the process: it is answered by an error
object on the same stream and the loop keeps going. Response ids always
echo the request id when one could be parsed, else null.
"""

from __future__ import annotations

import base64
import binascii
import http.server
import io
import json
import sys
from dataclasses import dataclass, field

from PIL import Image, UnidentifiedImageError

from .rules import PredictionRule


@dataclass
class ServerConfig:
    """Exactly one rule is active; transport is stdio unless a port is set."""

    rule: PredictionRule
    http_port: int | None = None
    extra: dict = field(default_factory=dict)


def _error(request_id, message: str) -> str:
    return json.dumps({"id": request_id, "error": message})


def handle_request(line: str, rule: PredictionRule) -> str:
    """One request line in, one response line out (no trailing newline).

    Unknown extra fields are ignored. Anything wrong produces an error
    object that echoes the id when the request carried a usable one.
    """
    request_id = None
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        return _error(None, f"invalid JSON: {exc}")
    if not isinstance(obj, dict):
        return _error(None, "request must be a JSON object")
    raw_id = obj.get("id")
    if isinstance(raw_id, int) and not isinstance(raw_id, bool):
        request_id = raw_id
    elif raw_id is not None:
        return _error(None, f"id must be an integer, got {raw_id!r}")
    if request_id is None:
        return _error(None, "request is missing an integer 'id'")
    if "image" not in obj or not isinstance(obj["image"], str):
        return _error(request_id, "request is missing a base64 'image' string")
    try:
        raw = base64.b64decode(obj["image"], validate=True)
    except (binascii.Error, ValueError) as exc:
        return _error(request_id, f"image is not valid base64: {exc}")
    try:
        with Image.open(io.BytesIO(raw)) as img:
            rgb = img.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        return _error(request_id, f"image bytes do not decode: {exc}")
    try:
        probs = rule.predict(rgb)
    except Exception as exc:  # the process must outlive a misbehaving rule
        return _error(request_id, f"prediction failed: {exc}")
    return json.dumps({"id": request_id, "probs": probs})


def serve_stdio(rule: PredictionRule, stdin=None, stdout=None) -> None:
    """Blocking request loop over newline-delimited JSON on stdio."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        stdout.write(handle_request(line, rule) + "\n")
        stdout.flush()


class _ProtocolHandler(http.server.BaseHTTPRequestHandler):
    rule: PredictionRule = None  # set by serve_http

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length).decode("utf-8", errors="replace")
        response = handle_request(body, self.rule)
        payload = response.encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


def make_http_server(rule: PredictionRule, port: int, host: str = "127.0.0.1") -> http.server.HTTPServer:
    handler = type("BoundHandler", (_ProtocolHandler,), {"rule": rule})
    return http.server.HTTPServer((host, port), handler)


def serve_http(rule: PredictionRule, port: int, host: str = "127.0.0.1") -> None:
    """Blocking single-threaded HTTP transport; same body per POST."""
    server = make_http_server(rule, port, host)
    print(f"listening on http://{host}:{server.server_address[1]}", file=sys.stderr, flush=True)
    server.serve_forever()
