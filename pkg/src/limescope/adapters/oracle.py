"""Analytic ground-truth models for testing the explanation pipeline.

PlantedOracle answers with high class-1 probability exactly while one known
segment still carries its original pixels; MonotoneOracle interpolates with
the fraction of those pixels left intact. Both depend on nothing outside
the key segment, which is what makes recovery claims testable.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from ..image import RasterImage
from ..segmentation import SegmentMap
from ..validation import check_same_geometry
from .base import DEFAULT_CLASS_NAMES, ModelAdapter, stack_images

#: per-pixel tolerance for "matches the original content"
PIXEL_MATCH_TOL = 1e-6


class PlantedOracle(ModelAdapter):
    """Class-1 probability is p_hi iff the key segment is untouched, else p_lo."""

    def __init__(
        self,
        segment_map: SegmentMap,
        key_segment: int,
        reference: RasterImage,
        p_hi: float = 0.9,
        p_lo: float = 0.1,
        model_id: str | None = None,
        class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
    ):
        super().__init__(model_id or f"oracle:segment-{key_segment}", class_names)
        if not 0.0 <= p_lo < p_hi <= 1.0:
            raise ContractError(f"need 0 <= p_lo < p_hi <= 1, got p_lo={p_lo} p_hi={p_hi}")
        if not 0 <= key_segment < segment_map.n_segments:
            raise ContractError(f"key segment {key_segment} out of range [0, {segment_map.n_segments})")
        check_same_geometry(reference, segment_map)
        self.segment_map = segment_map
        self.key_segment = key_segment
        self.reference = reference
        self.p_hi = p_hi
        self.p_lo = p_lo
        self._key_mask = segment_map.pixels_of(key_segment)
        self._key_pixels = reference.pixels[self._key_mask]

    def _check_dims(self, stack: np.ndarray) -> None:
        if stack.shape[1:3] != (self.reference.height, self.reference.width):
            raise ContractError(
                f"oracle expects {self.reference.width}x{self.reference.height} images, "
                f"got {stack.shape[2]}x{stack.shape[1]}"
            )

    def predict_proba(self, images) -> np.ndarray:
        stack = stack_images(images)
        self._check_dims(stack)
        diffs = np.abs(stack[:, self._key_mask, :] - self._key_pixels)
        intact = diffs.reshape(stack.shape[0], -1).max(axis=1) <= PIXEL_MATCH_TOL
        p1 = np.where(intact, self.p_hi, self.p_lo)
        return np.stack([1.0 - p1, p1], axis=1)


class MonotoneOracle(ModelAdapter):
    """Class-1 probability scales with the intact fraction of the key segment."""

    def __init__(
        self,
        segment_map: SegmentMap,
        key_segment: int,
        reference: RasterImage,
        p_hi: float = 0.9,
        p_lo: float = 0.1,
        model_id: str | None = None,
        class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
    ):
        super().__init__(model_id or f"monotone-oracle:segment-{key_segment}", class_names)
        if not 0.0 <= p_lo < p_hi <= 1.0:
            raise ContractError(f"need 0 <= p_lo < p_hi <= 1, got p_lo={p_lo} p_hi={p_hi}")
        check_same_geometry(reference, segment_map)
        self.segment_map = segment_map
        self.key_segment = key_segment
        self.reference = reference
        self.p_hi = p_hi
        self.p_lo = p_lo
        self._key_mask = segment_map.pixels_of(key_segment)
        self._key_pixels = reference.pixels[self._key_mask]

    def predict_proba(self, images) -> np.ndarray:
        stack = stack_images(images)
        if stack.shape[1:3] != (self.reference.height, self.reference.width):
            raise ContractError("image dimensions do not match the oracle's reference")
        diffs = np.abs(stack[:, self._key_mask, :] - self._key_pixels).max(axis=2)
        intact_frac = (diffs <= PIXEL_MATCH_TOL).mean(axis=1)
        p1 = self.p_lo + (self.p_hi - self.p_lo) * intact_frac
        return np.stack([1.0 - p1, p1], axis=1)


def oracle_predict(oracle: PlantedOracle, image: RasterImage) -> np.ndarray:
    """Single-image convenience over PlantedOracle.predict_proba."""
    return oracle.predict_proba(image)[0]
