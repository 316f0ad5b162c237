"""Helpers for driving the server as a real subprocess."""

from __future__ import annotations

import base64
import io
import os
import subprocess
import sys
from pathlib import Path

import pytest
from PIL import Image

SERVER_SRC = Path(__file__).resolve().parents[1] / "src"
PRIMARY_SRC = Path(__file__).resolve().parents[2] / "src"


def png_b64(color=(255, 255, 255), size=(2, 2)) -> str:
    buffer = io.BytesIO()
    Image.new("RGB", size, color).save(buffer, format="PNG")
    return base64.b64encode(buffer.getvalue()).decode("ascii")


def server_env(include_primary: bool = False) -> dict:
    env = os.environ.copy()
    paths = [str(SERVER_SRC)]
    if include_primary:
        paths.append(str(PRIMARY_SRC))
    if env.get("PYTHONPATH"):
        paths.append(env["PYTHONPATH"])
    env["PYTHONPATH"] = os.pathsep.join(paths)
    return env


def server_command(*args: str) -> list[str]:
    return [sys.executable, "-m", "refmodel_server", *args]


@pytest.fixture
def stdio_server():
    procs = []

    def start(*args: str) -> subprocess.Popen:
        proc = subprocess.Popen(
            server_command(*args),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
            env=server_env(),
        )
        procs.append(proc)
        return proc

    yield start
    for proc in procs:
        if proc.poll() is None:
            proc.terminate()
            proc.wait(timeout=5)
