"""Input validation helpers shared by estimators and pipeline functions.

Probability vectors, pixel arrays and mask matrices are plain numpy arrays
throughout the package; these helpers enforce their invariants at the
boundaries where data enters.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError

#: tolerance on |sum(probs) - 1| for a valid probability vector
PROB_SUM_TOL = 1e-6


def as_pixel_array(pixels) -> np.ndarray:
    """Coerce to a float64 (H, W, 3) array with every intensity in [0, 1]."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractError(f"expected an (H, W, 3) RGB array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ContractError("image must be at least 1x1")
    if not np.isfinite(arr).all():
        raise ContractError("pixel intensities must be finite")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ContractError("pixel intensities must lie in [0, 1]")
    return arr


def check_probability_vector(probs, n_classes: int | None = None, tol: float = PROB_SUM_TOL) -> np.ndarray:
    """Validate a single probability vector; returns it as float64."""
    vec = np.asarray(probs, dtype=np.float64)
    if vec.ndim != 1 or vec.size < 2:
        raise ContractError(f"probability vector must be 1-d with >= 2 entries, got shape {vec.shape}")
    if n_classes is not None and vec.size != n_classes:
        raise ContractError(f"expected {n_classes} class probabilities, got {vec.size}")
    if not np.isfinite(vec).all():
        raise ContractError("probabilities must be finite")
    if vec.min() < 0.0 or vec.max() > 1.0:
        raise ContractError("probabilities must lie in [0, 1]")
    if abs(float(vec.sum()) - 1.0) > tol:
        raise ContractError(f"probabilities sum to {float(vec.sum()):.9f}, expected 1 within {tol}")
    return vec


def check_probability_matrix(probs, n_rows: int | None = None, n_classes: int | None = None,
                             tol: float = PROB_SUM_TOL) -> np.ndarray:
    """Validate an (n, k) matrix of probability rows; returns it as float64."""
    mat = np.asarray(probs, dtype=np.float64)
    if mat.ndim != 2:
        raise ContractError(f"expected an (n, k) probability matrix, got shape {mat.shape}")
    if n_rows is not None and mat.shape[0] != n_rows:
        raise ContractError(f"expected {n_rows} probability rows, got {mat.shape[0]}")
    if n_classes is not None and mat.shape[1] != n_classes:
        raise ContractError(f"expected {n_classes} classes, got {mat.shape[1]}")
    if not np.isfinite(mat).all():
        raise ContractError("probabilities must be finite")
    if mat.min() < 0.0 or mat.max() > 1.0:
        raise ContractError("probabilities must lie in [0, 1]")
    sums = mat.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > tol)[0]
    if bad.size:
        i = int(bad[0])
        raise ContractError(f"probability row {i} sums to {sums[i]:.9f}, expected 1 within {tol}")
    return mat


def check_mask_vector(mask, n_segments: int) -> np.ndarray:
    """Validate a binary mask over segments; returns it as uint8."""
    vec = np.asarray(mask)
    if vec.ndim != 1 or vec.size != n_segments:
        raise ContractError(f"mask must have length {n_segments}, got shape {vec.shape}")
    if not np.isin(vec, (0, 1)).all():
        raise ContractError("mask entries must be 0 or 1")
    return vec.astype(np.uint8)


def check_mask_matrix(masks, n_segments: int | None = None) -> np.ndarray:
    """Validate an (n, d) binary mask matrix; returns it as uint8."""
    mat = np.asarray(masks)
    if mat.ndim != 2:
        raise ContractError(f"expected an (n, d) mask matrix, got shape {mat.shape}")
    if n_segments is not None and mat.shape[1] != n_segments:
        raise ContractError(f"masks must have {n_segments} columns, got {mat.shape[1]}")
    if not np.isin(mat, (0, 1)).all():
        raise ContractError("mask entries must be 0 or 1")
    return mat.astype(np.uint8)


def check_sample_weights(weights, n_samples: int) -> np.ndarray:
    """Validate non-negative sample weights with at least one positive entry."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size != n_samples:
        raise ContractError(f"weights must have length {n_samples}, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise ContractError("weights must be finite")
    if w.min() < 0.0:
        raise ContractError("weights must be non-negative")
    if w.max() == 0.0:
        raise ContractError("at least one weight must be positive")
    return w


def check_same_geometry(image, segment_map) -> None:
    """Require an image and a segment map to share pixel dimensions."""
    if (image.height, image.width) != (segment_map.height, segment_map.width):
        raise ContractError(
            f"image is {image.width}x{image.height} but segment map is "
            f"{segment_map.width}x{segment_map.height}"
        )


def check_connectivity(segment_map) -> None:
    """Require every segment label to form exactly one 4-connected component."""
    from scipy import ndimage

    labels = segment_map.labels
    for seg in range(segment_map.n_segments):
        _, n_components = ndimage.label(labels == seg)
        if n_components != 1:
            raise ContractError(f"segment {seg} splits into {n_components} 4-connected components")
