"""Prediction rules: what the server answers for a decoded image."""

from __future__ import annotations

from PIL import Image


class PredictionRule:
    """Maps a decoded RGB image to a normalized probability list."""

    name = "abstract"

    def predict(self, image: Image.Image) -> list[float]:
        raise NotImplementedError


class BrightnessRule(PredictionRule):
    """probs = [1 - b, b] with b the mean intensity over pixels and channels.

    An all-white image answers [0.0, 1.0], all-black [1.0, 0.0]; anything in
    between responds smoothly, which makes the rule a usable stand-in model
    for perturbation-based explainers.
    """

    name = "brightness"

    def predict(self, image: Image.Image) -> list[float]:
        raw = image.tobytes()  # RGB, three bytes per pixel
        b = sum(raw) / (len(raw) * 255.0)
        return [1.0 - b, b]


class FixedTableRule(PredictionRule):
    """Constant probability table, normalized once at construction."""

    name = "table"

    def __init__(self, probs: list[float]):
        if len(probs) < 2 or any(p < 0 for p in probs):
            raise ValueError(f"need >= 2 non-negative probabilities, got {probs}")
        total = sum(probs)
        if total <= 0:
            raise ValueError("probabilities must not all be zero")
        self.probs = [p / total for p in probs]

    def predict(self, image: Image.Image) -> list[float]:
        return list(self.probs)


class PretrainedRule(PredictionRule):
    """Optional: a saved Keras model behind the same contract.

    Imported lazily so stub mode never touches an ML stack. The image is
    resized to the model's input and the output row is normalized.
    """

    name = "pretrained"

    def __init__(self, model_path: str):
        try:
            from tensorflow import keras  # deferred heavy import
        except ImportError as exc:
            raise RuntimeError(
                "pretrained mode needs tensorflow; install the [pretrained] extra"
            ) from exc
        self.model = keras.models.load_model(model_path)
        shape = self.model.input_shape
        self.target_size = (int(shape[2]), int(shape[1]))  # (width, height)

    def predict(self, image: Image.Image) -> list[float]:
        import numpy as np

        resized = image.resize(self.target_size)
        batch = np.asarray(resized, dtype="float32")[None, ...] / 255.0
        row = self.model.predict(batch, verbose=0)[0]
        row = [max(float(v), 0.0) for v in row]
        total = sum(row) or 1.0
        return [v / total for v in row]
