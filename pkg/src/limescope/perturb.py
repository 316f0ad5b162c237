"""Perturbation sampling: masked image variants and their locality weights.

A perturbed sample is a binary vector over segments (1 = keep, 0 = replace).
Bits are fair coins from the SplitMix64 stream, the first sample is always
the unmasked original, and locality weights follow exp(-D^2 / sigma^2) with
D the cosine distance to the all-ones vector.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import BatchPredictionError, ContractError
from .fileio import read_json, write_json
from .image import RasterImage
from .rng import bernoulli_bits
from .segmentation import SegmentMap
from .validation import (
    check_mask_matrix,
    check_mask_vector,
    check_probability_matrix,
    check_same_geometry,
)

FUSION_SEGMENT_MEAN = "segment-mean"
FUSION_FIXED_COLOR = "fixed-color"


@dataclass(frozen=True)
class FusionPolicy:
    """How pixels of dropped segments are filled."""

    mode: str = FUSION_SEGMENT_MEAN
    fixed_color: tuple[float, float, float] = (0.5, 0.5, 0.5)

    def __post_init__(self):
        if self.mode not in (FUSION_SEGMENT_MEAN, FUSION_FIXED_COLOR):
            raise ContractError(f"unknown fusion mode {self.mode!r}")
        if len(self.fixed_color) != 3 or any(not 0.0 <= c <= 1.0 for c in self.fixed_color):
            raise ContractError(f"fixed_color channels must lie in [0, 1], got {self.fixed_color}")


@dataclass(frozen=True, eq=False)
class PerturbationBatch:
    """Masks, locality weights and (once queried) model predictions.

    model_id and class_names travel with the batch so explanations can carry
    full provenance without re-touching the adapter.
    """

    masks: np.ndarray
    weights: np.ndarray
    predictions: np.ndarray | None
    seed: int
    kernel_width: float
    model_id: str = ""
    class_names: tuple[str, ...] = ("non-glaucoma", "glaucoma")

    def __post_init__(self):
        masks = check_mask_matrix(self.masks)
        n = masks.shape[0]
        if n < 2:
            raise ContractError(f"batch needs >= 2 samples, got {n}")
        if not (masks[0] == 1).all():
            raise ContractError("masks[0] must be the all-ones vector (the original instance)")
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (n,):
            raise ContractError(f"weights must have shape ({n},), got {weights.shape}")
        if weights[0] != 1.0:
            raise ContractError(f"weights[0] must be 1, got {weights[0]}")
        if weights.min() < 0.0:
            raise ContractError("weights must be non-negative")
        masks.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "weights", weights)
        if self.predictions is not None:
            preds = check_probability_matrix(self.predictions, n_rows=n, n_classes=len(self.class_names))
            preds.flags.writeable = False
            object.__setattr__(self, "predictions", preds)
        if self.kernel_width <= 0:
            raise ContractError(f"kernel_width must be > 0, got {self.kernel_width}")

    @property
    def n_samples(self) -> int:
        return self.masks.shape[0]

    @property
    def n_segments(self) -> int:
        return self.masks.shape[1]

    @property
    def complete(self) -> bool:
        return self.predictions is not None

    def to_json_dict(self) -> dict:
        return {
            "masks": self.masks.astype(int).tolist(),
            "weights": self.weights.tolist(),
            "predictions": None if self.predictions is None else self.predictions.tolist(),
            "seed": self.seed,
            "kernel_width": self.kernel_width,
            "model_id": self.model_id,
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PerturbationBatch":
        return cls(
            masks=np.asarray(obj["masks"], dtype=np.uint8),
            weights=np.asarray(obj["weights"], dtype=np.float64),
            predictions=None if obj["predictions"] is None else np.asarray(obj["predictions"]),
            seed=int(obj["seed"]),
            kernel_width=float(obj["kernel_width"]),
            model_id=str(obj.get("model_id", "")),
            class_names=tuple(obj.get("class_names", ("non-glaucoma", "glaucoma"))),
        )

    def save(self, path) -> None:
        write_json(path, self.to_json_dict())

    @classmethod
    def load(cls, path) -> "PerturbationBatch":
        return cls.from_json_dict(read_json(path))


def sample_masks(n_segments: int, n_samples: int, seed: int) -> np.ndarray:
    """(n_samples, n_segments) uint8 masks; row 0 all-ones, rest Bernoulli(0.5).

    Deterministic for fixed (n_segments, n_samples, seed): bit (i, j) of the
    perturbed rows is draw (i - 1) * n_segments + j of the SplitMix64 stream.
    """
    if n_segments < 1:
        raise ContractError(f"n_segments must be >= 1, got {n_segments}")
    if n_samples < 2:
        raise ContractError(f"n_samples must be >= 2 (original plus one perturbation), got {n_samples}")
    masks = np.empty((n_samples, n_segments), dtype=np.uint8)
    masks[0] = 1
    masks[1:] = bernoulli_bits(seed, n_samples - 1, n_segments)
    return masks


def segment_mean_colors(image: RasterImage, segment_map: SegmentMap) -> np.ndarray:
    """(d, 3) mean color per segment.

    A constant-color segment gets exactly its color (summation rounding is
    bypassed), which is what makes apply_mask exactly idempotent: once a
    segment is filled with its mean it is constant, and re-filling keeps it
    bit-identical.
    """
    check_same_geometry(image, segment_map)
    flat = segment_map.labels.ravel()
    d = segment_map.n_segments
    index = np.arange(d)
    counts = np.bincount(flat, minlength=d).astype(np.float64)
    means = np.empty((d, 3))
    for c in range(3):
        channel = image.pixels[..., c]
        means[:, c] = np.bincount(flat, weights=channel.ravel(), minlength=d) / counts
        lo = ndimage.minimum(channel, labels=segment_map.labels, index=index)
        hi = ndimage.maximum(channel, labels=segment_map.labels, index=index)
        constant = lo == hi
        means[constant, c] = lo[constant]
    return means


def apply_mask(
    image: RasterImage,
    segment_map: SegmentMap,
    mask,
    policy: FusionPolicy = FusionPolicy(),
    mean_colors: np.ndarray | None = None,
) -> RasterImage:
    """Image with bit-0 segments replaced by their mean color or a fixed color.

    `mean_colors` can be passed to reuse a precomputed segment_mean_colors
    table across many masks.
    """
    check_same_geometry(image, segment_map)
    bits = check_mask_vector(mask, segment_map.n_segments)
    if policy.mode == FUSION_SEGMENT_MEAN:
        fill = segment_mean_colors(image, segment_map) if mean_colors is None else mean_colors
    else:
        fill = np.tile(np.asarray(policy.fixed_color, dtype=np.float64), (segment_map.n_segments, 1))
    keep = bits[segment_map.labels].astype(bool)
    out = np.where(keep[..., None], image.pixels, fill[segment_map.labels])
    return RasterImage(out)


def mask_distance(a, b) -> float:
    """Cosine distance 1 - a.b / (|a||b|); an all-zeros side is distance 1."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise ContractError(f"mask vectors must share a 1-d shape, got {va.shape} and {vb.shape}")
    norm_a = math.sqrt(float(va @ va))
    norm_b = math.sqrt(float(vb @ vb))
    if norm_a == 0.0 or norm_b == 0.0:
        return 1.0
    cos = float(va @ vb) / (norm_a * norm_b)
    return 1.0 - min(cos, 1.0)


def kernel_weight(distance: float, sigma: float) -> float:
    """Exponential locality kernel exp(-distance^2 / sigma^2)."""
    if sigma <= 0:
        raise ContractError(f"sigma must be > 0, got {sigma}")
    if distance < 0:
        raise ContractError(f"distance must be >= 0, got {distance}")
    return math.exp(-(distance**2) / sigma**2)


def _locality_weights(masks: np.ndarray, sigma: float) -> np.ndarray:
    d = masks.shape[1]
    ones_count = masks.sum(axis=1).astype(np.float64)
    cos = np.sqrt(ones_count / d)
    dist = np.where(ones_count == 0, 1.0, 1.0 - cos)
    weights = np.exp(-(dist**2) / sigma**2)
    weights[0] = 1.0
    return weights


def build_batch(
    image: RasterImage,
    segment_map: SegmentMap,
    n_samples: int,
    seed: int,
    sigma: float,
    policy: FusionPolicy,
    model,
    workers: int = 1,
    chunk_size: int = 64,
) -> PerturbationBatch:
    """Sample masks, query the model on every masked image, assemble the batch.

    Chunks of masked images go to model.predict_proba; with workers > 1 the
    chunks run on a thread pool and land by sample index, so the result is
    identical to the sequential order. A failure on any sample raises
    BatchPredictionError carrying its index.
    """
    if sigma <= 0:
        raise ContractError(f"sigma must be > 0, got {sigma}")
    if workers < 1:
        raise ContractError(f"workers must be >= 1, got {workers}")
    check_same_geometry(image, segment_map)
    masks = sample_masks(segment_map.n_segments, n_samples, seed)
    weights = _locality_weights(masks, sigma)
    mean_colors = (
        segment_mean_colors(image, segment_map) if policy.mode == FUSION_SEGMENT_MEAN else None
    )

    n_classes = len(model.class_names)
    predictions = np.empty((n_samples, n_classes), dtype=np.float64)

    def run_chunk(start: int, stop: int) -> None:
        stack = np.empty((stop - start, image.height, image.width, 3))
        for offset, row in enumerate(range(start, stop)):
            stack[offset] = apply_mask(image, segment_map, masks[row], policy, mean_colors).pixels
        try:
            probs = model.predict_proba(stack)
        except BatchPredictionError as exc:
            raise BatchPredictionError(start + exc.sample_index, str(exc)) from exc
        except Exception as exc:
            raise BatchPredictionError(start, f"model failed on chunk starting here: {exc}") from exc
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[0] != stop - start:
            raise BatchPredictionError(
                start, f"model returned shape {probs.shape} for a chunk of {stop - start} images"
            )
        for offset, row in enumerate(range(start, stop)):
            try:
                check_probability_matrix(probs[offset : offset + 1], n_classes=n_classes)
            except ContractError as exc:
                raise BatchPredictionError(row, str(exc)) from exc
            predictions[row] = probs[offset]

    chunks = [(start, min(start + chunk_size, n_samples)) for start in range(0, n_samples, chunk_size)]
    if workers == 1:
        for start, stop in chunks:
            run_chunk(start, stop)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for future in [pool.submit(run_chunk, start, stop) for start, stop in chunks]:
                future.result()

    return PerturbationBatch(
        masks=masks,
        weights=weights,
        predictions=predictions,
        seed=seed,
        kernel_width=sigma,
        model_id=getattr(model, "model_id", ""),
        class_names=tuple(model.class_names),
    )
