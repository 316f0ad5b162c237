"""Clients for external model processes speaking the prediction protocol.

One request object per image, newline-delimited JSON:

    -> {"id": <int>, "image": "<base64 PNG>"}
    <- {"id": <int>, "probs": [p0, p1, ...]}   or   {"id": ..., "error": "..."}

Responses may arrive in any order; they are matched back to requests by id.
The same body works over a child process's stdin/stdout (`proc:`) or as an
HTTP POST per image (`http:`). Response probabilities must sum to 1 within
1e-3; anything inside that band is renormalized to exact unit sum so every
vector entering the pipeline satisfies the strict 1e-6 invariant.
"""

from __future__ import annotations

import base64
import json
import os
import shlex
import subprocess
import threading
import time
import urllib.error
import urllib.request
from queue import Empty, Queue

import numpy as np

from ..errors import (
    BatchPredictionError,
    ContractError,
    ModelProtocolError,
    ModelTransportError,
    ModelValidationError,
)
from ..image import RasterImage, encode_png, image_from_array
from .base import DEFAULT_CLASS_NAMES, ModelAdapter, stack_images

DEFAULT_TIMEOUT = 30.0  # seconds per batch
TIMEOUT_ENV_VAR = "LIMESCOPE_MODEL_TIMEOUT"

#: protocol-level slack on |sum(probs) - 1|; inside it we renormalize
PROTOCOL_PROB_TOL = 1e-3


def resolve_timeout(timeout: float | None) -> float:
    if timeout is not None:
        return timeout
    env = os.environ.get(TIMEOUT_ENV_VAR)
    if env:
        try:
            return float(env)
        except ValueError as exc:
            raise ContractError(f"{TIMEOUT_ENV_VAR} must be a number, got {env!r}") from exc
    return DEFAULT_TIMEOUT


def image_to_base64_png(image: RasterImage) -> str:
    return base64.b64encode(encode_png(image)).decode("ascii")


def _parse_response(line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ModelProtocolError(f"response is not valid JSON ({exc})", line=line) from exc
    if not isinstance(obj, dict) or "id" not in obj:
        raise ModelProtocolError("response must be an object with an 'id' field", line=line)
    return obj


def _validated_probs(obj: dict, line: str) -> np.ndarray:
    if "error" in obj:
        raise BatchPredictionError(int(obj["id"]), f"model reported: {obj['error']}")
    if "probs" not in obj:
        raise ModelProtocolError("response carries neither 'probs' nor 'error'", line=line)
    probs = np.asarray(obj["probs"], dtype=np.float64)
    if probs.ndim != 1 or probs.size < 2 or not np.isfinite(probs).all():
        raise ModelValidationError(f"bad probability vector {obj['probs']!r}")
    if probs.min() < 0.0:
        raise ModelValidationError(f"negative probability in {obj['probs']!r}")
    total = float(probs.sum())
    if abs(total - 1.0) > PROTOCOL_PROB_TOL:
        raise ModelValidationError(f"probabilities sum to {total:.6f}, off by more than {PROTOCOL_PROB_TOL}")
    return probs / total


class ProcessAdapter(ModelAdapter):
    """Adapter over one child process; requests serialized, replies demuxed by id.

    The child is spawned on construction and owned by this instance; close()
    (or context-manager exit) terminates it.
    """

    def __init__(
        self,
        command: str | list[str],
        model_id: str | None = None,
        class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
        timeout: float | None = None,
    ):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise ContractError("empty model command")
        super().__init__(model_id or f"proc:{' '.join(argv)}", class_names)
        self.timeout = resolve_timeout(timeout)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ModelTransportError(f"cannot start model process {argv!r}: {exc}") from exc
        self._lines: Queue = Queue()
        self._next_id = 0
        self._write_lock = threading.Lock()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF marker

    def predict_proba(self, images) -> np.ndarray:
        stack = stack_images(images)
        n = stack.shape[0]
        deadline = time.monotonic() + self.timeout

        with self._write_lock:
            first_id = self._next_id
            self._next_id += n
            ids = list(range(first_id, first_id + n))
            if self._proc.poll() is not None:
                raise ModelTransportError(f"model process exited with code {self._proc.returncode}")
            try:
                assert self._proc.stdin is not None
                for req_id, pixels in zip(ids, stack):
                    payload = {"id": req_id, "image": image_to_base64_png(image_from_array(pixels))}
                    self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ModelTransportError(f"model process closed its input: {exc}") from exc

            results: dict[int, np.ndarray] = {}
            wanted = set(ids)
            while wanted:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ModelTransportError(
                        f"timed out after {self.timeout}s waiting for {len(wanted)} of {n} responses"
                    )
                try:
                    line = self._lines.get(timeout=remaining)
                except Empty:
                    continue
                if line is None:
                    raise ModelTransportError("model process closed its output before answering")
                line = line.strip()
                if not line:
                    continue
                obj = _parse_response(line)
                if obj["id"] not in wanted:
                    continue  # stale response from an aborted batch
                resp_id = int(obj["id"])
                try:
                    probs = _validated_probs(obj, line)
                except BatchPredictionError as exc:
                    raise BatchPredictionError(resp_id - first_id, str(exc)) from exc
                results[resp_id] = probs
                wanted.discard(resp_id)

        rows = [results[i] for i in ids]
        width = rows[0].size
        if any(r.size != width for r in rows):
            raise ModelValidationError("responses disagree on the number of classes")
        return np.stack(rows)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin is not None:
                    self._proc.stdin.close()
                self._proc.terminate()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()

    def __enter__(self) -> "ProcessAdapter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


class HttpAdapter(ModelAdapter):
    """One HTTP POST per image with the same request/response body."""

    def __init__(
        self,
        url: str,
        model_id: str | None = None,
        class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
        timeout: float | None = None,
    ):
        super().__init__(model_id or f"http:{url}", class_names)
        self.url = url
        self.timeout = resolve_timeout(timeout)

    def predict_proba(self, images) -> np.ndarray:
        stack = stack_images(images)
        deadline = time.monotonic() + self.timeout
        rows = []
        for index, pixels in enumerate(stack):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ModelTransportError(f"timed out after {self.timeout}s at image {index}")
            payload = json.dumps({"id": index, "image": image_to_base64_png(image_from_array(pixels))})
            request = urllib.request.Request(
                self.url, data=payload.encode("utf-8"), headers={"Content-Type": "application/json"}
            )
            try:
                with urllib.request.urlopen(request, timeout=remaining) as response:
                    body = response.read().decode("utf-8")
            except urllib.error.URLError as exc:
                raise ModelTransportError(f"cannot reach {self.url}: {exc}") from exc
            obj = _parse_response(body.strip())
            if int(obj["id"]) != index:
                raise ModelProtocolError(f"response id {obj['id']} does not match request id {index}", line=body)
            try:
                rows.append(_validated_probs(obj, body))
            except BatchPredictionError as exc:
                raise BatchPredictionError(index, str(exc)) from exc
        width = rows[0].size
        if any(r.size != width for r in rows):
            raise ModelValidationError("responses disagree on the number of classes")
        return np.stack(rows)


def url_from_endpoint(endpoint: str) -> str:
    """Normalize an `http:`-style endpoint spec to a full URL."""
    if endpoint.startswith(("http://", "https://")):
        return endpoint
    if endpoint.startswith("http:"):
        return "http://" + endpoint[len("http:") :]
    raise ContractError(f"not an http endpoint: {endpoint!r}")


def external_predict(endpoint: str, images, timeout: float | None = None) -> np.ndarray:
    """One-shot convenience: spin up the right adapter, predict, tear down.

    `endpoint` is `proc:<command line>` or `http:<url>`.
    """
    if endpoint.startswith("proc:"):
        with ProcessAdapter(endpoint[len("proc:") :], timeout=timeout) as adapter:
            return adapter.predict_proba(images)
    if endpoint.startswith(("http:", "https:")):
        return HttpAdapter(url_from_endpoint(endpoint), timeout=timeout).predict_proba(images)
    raise ContractError(f"endpoint must start with proc: or http:, got {endpoint!r}")
