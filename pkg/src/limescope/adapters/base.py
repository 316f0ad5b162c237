"""The black-box boundary: everything downstream sees only predict_proba."""

from __future__ import annotations

import abc

import numpy as np

from ..errors import ContractError
from ..image import RasterImage
from ..validation import check_probability_matrix

DEFAULT_CLASS_NAMES = ("non-glaucoma", "glaucoma")


def stack_images(images) -> np.ndarray:
    """Coerce a RasterImage / sequence / (n, H, W, 3) array to a float64 stack."""
    if isinstance(images, RasterImage):
        return images.pixels[None, ...]
    if isinstance(images, np.ndarray):
        if images.ndim == 3:
            return images[None, ...].astype(np.float64)
        if images.ndim == 4:
            return images.astype(np.float64)
        raise ContractError(f"image stack must be (n, H, W, 3), got shape {images.shape}")
    stack = [img.pixels if isinstance(img, RasterImage) else np.asarray(img, dtype=np.float64) for img in images]
    if not stack:
        raise ContractError("empty image batch")
    return np.stack(stack)


class ModelAdapter(abc.ABC):
    """A classifier queried only through order-preserving batch predictions."""

    def __init__(self, model_id: str, class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES):
        if len(class_names) < 2:
            raise ContractError("adapters need >= 2 class names")
        self.model_id = model_id
        self.class_names = tuple(class_names)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @abc.abstractmethod
    def predict_proba(self, images) -> np.ndarray:
        """(n, n_classes) probabilities, one valid row per input image, in order."""

    def predict(self, images) -> np.ndarray:
        """Argmax labels; ties break toward the lower label id."""
        probs = check_probability_matrix(self.predict_proba(images), n_classes=self.n_classes)
        return np.argmax(probs, axis=1)
