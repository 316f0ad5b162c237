"""The stdio and HTTP transports as real processes/sockets."""

import json
import threading
import urllib.request

from refmodel_server import BrightnessRule
from refmodel_server.server import make_http_server

from conftest import png_b64


def test_stdio_round_trip(stdio_server):
    proc = stdio_server("--rule", "brightness")
    proc.stdin.write(json.dumps({"id": 5, "image": png_b64((255, 255, 255))}) + "\n")
    proc.stdin.flush()
    response = json.loads(proc.stdout.readline())
    assert response == {"id": 5, "probs": [0.0, 1.0]}


def test_stdio_survives_malformed_then_answers(stdio_server):
    proc = stdio_server()
    proc.stdin.write("garbage line\n")
    proc.stdin.write(json.dumps({"id": 1, "image": png_b64((0, 0, 0))}) + "\n")
    proc.stdin.flush()
    first = json.loads(proc.stdout.readline())
    second = json.loads(proc.stdout.readline())
    assert first["id"] is None and "error" in first
    assert second == {"id": 1, "probs": [1.0, 0.0]}
    assert proc.poll() is None  # still alive


def test_stdio_table_rule(stdio_server):
    proc = stdio_server("--rule", "table", "--probs", "0.3,0.7")
    proc.stdin.write(json.dumps({"id": 0, "image": png_b64()}) + "\n")
    proc.stdin.flush()
    response = json.loads(proc.stdout.readline())
    assert response["probs"] == [0.3, 0.7]


def test_http_round_trip():
    server = make_http_server(BrightnessRule(), port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}/predict"
        body = json.dumps({"id": 11, "image": png_b64((255, 255, 255))}).encode()
        request = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(request, timeout=10) as response:
            payload = json.loads(response.read())
        assert payload == {"id": 11, "probs": [0.0, 1.0]}

        bad = urllib.request.Request(url, data=b"{broken", headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(bad, timeout=10) as response:
            payload = json.loads(response.read())
        assert payload["id"] is None and "error" in payload
    finally:
        server.shutdown()
