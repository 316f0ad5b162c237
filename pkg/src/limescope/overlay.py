"""Overlay rendering: outline and tint the top-weighted segments.

Positive-weight segments tint green, negative red. The tint alpha (0.35)
and the 1-pixel boundary are fixed cosmetic constants, not per-call knobs.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .image import RasterImage
from .segmentation import SegmentMap
from .validation import check_same_geometry

TINT_ALPHA = 0.35
BOUNDARY_THICKNESS = 1  # pixels
POSITIVE_TINT = np.array([0.0, 1.0, 0.0])
NEGATIVE_TINT = np.array([1.0, 0.0, 0.0])


def rank_segments(weights, top_k: int) -> list[int]:
    """Segment ids ordered by |weight| descending; ties go to the smaller id.

    top_k larger than the segment count is clamped.
    """
    w = np.asarray(weights, dtype=np.float64)
    if top_k < 0:
        raise ContractError(f"top_k must be >= 0, got {top_k}")
    order = sorted(range(w.size), key=lambda i: (-abs(w[i]), i))
    return order[: min(top_k, w.size)]


def segment_boundaries(labels: np.ndarray) -> np.ndarray:
    """Boolean mask of pixels whose 4-neighborhood crosses a label or the image edge."""
    padded = np.pad(labels, 1, mode="constant", constant_values=-1)
    center = padded[1:-1, 1:-1]
    boundary = (
        (padded[:-2, 1:-1] != center)
        | (padded[2:, 1:-1] != center)
        | (padded[1:-1, :-2] != center)
        | (padded[1:-1, 2:] != center)
    )
    return boundary


def render_overlay(image: RasterImage, segments: SegmentMap, explanation, top_k: int) -> RasterImage:
    """Copy of `image` with the top_k segments by |weight| outlined and tinted.

    Interior pixels of a selected segment blend toward the tint with alpha
    0.35; its boundary pixels get the pure tint color. Pixels of unselected
    segments are returned untouched.
    """
    check_same_geometry(image, segments)
    weights = np.asarray(explanation.weights, dtype=np.float64)
    if weights.size != segments.n_segments:
        raise ContractError(
            f"explanation has {weights.size} weights but map has {segments.n_segments} segments"
        )
    selected = rank_segments(weights, top_k)
    out = image.pixels.copy()
    boundary = segment_boundaries(segments.labels)
    for seg in selected:
        tint = POSITIVE_TINT if weights[seg] >= 0 else NEGATIVE_TINT
        member = segments.labels == seg
        inner = member & ~boundary
        out[inner] = (1.0 - TINT_ALPHA) * out[inner] + TINT_ALPHA * tint
        edge = member & boundary
        out[edge] = tint
    return RasterImage(out)
