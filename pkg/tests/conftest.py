"""Shared fixtures and independent oracles used across the suite."""

from __future__ import annotations

import struct
import sys
import zlib
from pathlib import Path

import numpy as np
import pytest

from limescope import image_from_array

SRC_DIR = Path(__file__).resolve().parent.parent / "src"


def write_png_rgb8(path, rows):
    """Independent PNG encoder (struct + zlib only, no imaging library).

    `rows` is a list of rows, each a list of (r, g, b) byte triples. Serves
    as the decode oracle: what load_image reads must be these bytes / 255.
    """

    def chunk(tag: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + tag
            + data
            + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
        )

    height = len(rows)
    width = len(rows[0])
    header = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    raw = b"".join(b"\x00" + bytes(v for px in row for v in px) for row in rows)
    blob = b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", header) + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b"")
    Path(path).write_bytes(blob)


@pytest.fixture
def rng():
    return np.random.default_rng(20240813)


@pytest.fixture
def random_image(rng):
    def make(height=16, width=16, seed=None):
        local = rng if seed is None else np.random.default_rng(seed)
        return image_from_array(local.random((height, width, 3)))

    return make


def run_cli(argv, env_extra=None, timeout=120):
    """Invoke the CLI exactly as a user would: a fresh python subprocess."""
    import os
    import subprocess

    env = os.environ.copy()
    env["PYTHONPATH"] = str(SRC_DIR) + os.pathsep + env.get("PYTHONPATH", "")
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "limescope.cli", *argv],
        capture_output=True,
        text=True,
        env=env,
        timeout=timeout,
    )
