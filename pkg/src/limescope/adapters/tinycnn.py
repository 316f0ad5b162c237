"""Desk-scale CNN forward pass: conv, relu, batchnorm, dense, softmax.

Convolution is valid-padding cross-correlation (no kernel flip); dropout is
an inference-time identity. Weights live in a JSON manifest plus a
little-endian float32 blob with byte offsets, and layer shapes are composed
and checked at load time so a bad spec fails before any prediction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ContractError, ModelSpecError
from ..fileio import atomic_write_bytes, read_json, write_json
from ..image import RasterImage
from .base import DEFAULT_CLASS_NAMES, ModelAdapter, stack_images


def conv2d(x: np.ndarray, kernel: np.ndarray, stride: int = 1) -> np.ndarray:
    """Valid-padding cross-correlation of (H, W, C) with (k, k, C, F)."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if x.ndim != 3 or kernel.ndim != 4:
        raise ContractError(f"conv2d expects (H, W, C) and (k, k, C, F), got {x.shape} and {kernel.shape}")
    k = kernel.shape[0]
    if kernel.shape[1] != k:
        raise ContractError(f"kernel must be square, got {kernel.shape[:2]}")
    if kernel.shape[2] != x.shape[2]:
        raise ContractError(f"kernel expects {kernel.shape[2]} channels, input has {x.shape[2]}")
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    if k > x.shape[0] or k > x.shape[1]:
        raise ContractError(f"kernel {k}x{k} larger than input {x.shape[0]}x{x.shape[1]}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(0, 1))
    windows = windows[::stride, ::stride]  # (H', W', C, k, k)
    return np.einsum("xyckl,klcf->xyf", windows, kernel)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def batchnorm_infer(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, mean: np.ndarray, var: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Per-channel y = gamma * (x - mean) / sqrt(var + eps) + beta."""
    var = np.asarray(var, dtype=np.float64)
    if eps <= 0:
        raise ContractError(f"eps must be > 0, got {eps}")
    if (var < 0).any():
        raise ContractError("variances must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    return gamma * (x - mean) / np.sqrt(var + eps) + beta


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-shifted softmax; result sums to 1 within 1e-9."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ContractError(f"logits must be a vector of >= 2 entries, got shape {z.shape}")
    if not np.isfinite(z).all():
        raise ContractError("logits must be finite")
    shifted = np.exp(z - z.max())
    return shifted / shifted.sum()


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map x @ weights + bias with weights (in, out)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or weights.shape[0] != x.size:
        raise ContractError(f"dense expects input of {weights.shape[0]}, got shape {x.shape}")
    return x @ weights + bias


def flatten(x: np.ndarray) -> np.ndarray:
    """Row-major (C-order) flattening."""
    return np.asarray(x, dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class ConvLayer:
    weights: np.ndarray  # (k, k, C, F)
    stride: int = 1


@dataclass(frozen=True)
class ReluLayer:
    pass


@dataclass(frozen=True)
class BatchNormLayer:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5


@dataclass(frozen=True)
class FlattenLayer:
    pass


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # (in, out)
    bias: np.ndarray


@dataclass(frozen=True)
class DropoutLayer:
    rate: float = 0.5  # identity at inference


@dataclass(frozen=True)
class SoftmaxLayer:
    pass


Layer = ConvLayer | ReluLayer | BatchNormLayer | FlattenLayer | DenseLayer | DropoutLayer | SoftmaxLayer


def _propagate_shape(shape, layer, index: int):
    if isinstance(layer, ConvLayer):
        if len(shape) != 3:
            raise ModelSpecError(f"layer {index}: conv needs (H, W, C) input, have {shape}")
        k, _, c_in, f = layer.weights.shape
        h, w, c = shape
        if c != c_in:
            raise ModelSpecError(f"layer {index}: conv expects {c_in} channels, have {c}")
        if k > h or k > w:
            raise ModelSpecError(f"layer {index}: {k}x{k} kernel exceeds {h}x{w} input")
        return ((h - k) // layer.stride + 1, (w - k) // layer.stride + 1, f)
    if isinstance(layer, (ReluLayer, DropoutLayer)):
        return shape
    if isinstance(layer, BatchNormLayer):
        channels = shape[-1] if len(shape) == 3 else shape[0]
        if layer.gamma.shape != (channels,):
            raise ModelSpecError(f"layer {index}: batchnorm has {layer.gamma.size} channels, input has {channels}")
        return shape
    if isinstance(layer, FlattenLayer):
        return (int(np.prod(shape)),)
    if isinstance(layer, DenseLayer):
        if len(shape) != 1:
            raise ModelSpecError(f"layer {index}: dense needs a flat input, have {shape}")
        if layer.weights.shape[0] != shape[0]:
            raise ModelSpecError(
                f"layer {index}: dense expects input of {layer.weights.shape[0]}, have {shape[0]}"
            )
        if layer.bias.shape != (layer.weights.shape[1],):
            raise ModelSpecError(f"layer {index}: dense bias shape {layer.bias.shape} mismatches weights")
        return (layer.weights.shape[1],)
    if isinstance(layer, SoftmaxLayer):
        if len(shape) != 1:
            raise ModelSpecError(f"layer {index}: softmax needs a flat input, have {shape}")
        return shape
    raise ModelSpecError(f"layer {index}: unknown layer {layer!r}")


class TinyCnn(ModelAdapter):
    """Fixed-weight forward-only CNN behind the ModelAdapter contract."""

    def __init__(
        self,
        input_shape: tuple[int, int, int],
        layers: list[Layer],
        model_id: str = "tinycnn",
        class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
    ):
        super().__init__(model_id, class_names)
        if len(input_shape) != 3 or input_shape[2] != 3:
            raise ModelSpecError(f"input shape must be (H, W, 3), got {input_shape}")
        if not layers or not isinstance(layers[-1], SoftmaxLayer):
            raise ModelSpecError("the final layer must be softmax")
        shape = tuple(input_shape)
        for index, layer in enumerate(layers):
            shape = _propagate_shape(shape, layer, index)
        if shape != (self.n_classes,):
            raise ModelSpecError(f"network ends with shape {shape}, expected ({self.n_classes},)")
        self.input_shape = tuple(input_shape)
        self.layers = list(layers)

    def forward(self, image: RasterImage | np.ndarray) -> np.ndarray:
        x = image.pixels if isinstance(image, RasterImage) else np.asarray(image, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ContractError(f"expected input shape {self.input_shape}, got {x.shape}")
        for layer in self.layers:
            if isinstance(layer, ConvLayer):
                x = conv2d(x, layer.weights, layer.stride)
            elif isinstance(layer, ReluLayer):
                x = relu(x)
            elif isinstance(layer, BatchNormLayer):
                x = batchnorm_infer(x, layer.gamma, layer.beta, layer.mean, layer.var, layer.eps)
            elif isinstance(layer, FlattenLayer):
                x = flatten(x)
            elif isinstance(layer, DenseLayer):
                x = dense(x, layer.weights, layer.bias)
            elif isinstance(layer, DropoutLayer):
                pass
            elif isinstance(layer, SoftmaxLayer):
                x = softmax(x)
        return x

    def predict_proba(self, images) -> np.ndarray:
        stack = stack_images(images)
        return np.stack([self.forward(img) for img in stack])

    # -- weights file format -------------------------------------------------

    @classmethod
    def load(cls, manifest_path: str | Path) -> "TinyCnn":
        manifest_path = Path(manifest_path)
        try:
            manifest = read_json(manifest_path)
        except (OSError, ValueError) as exc:
            raise ModelSpecError(f"cannot read manifest {manifest_path}: {exc}") from exc
        try:
            blob = (manifest_path.parent / manifest["weights_file"]).read_bytes()
            input_shape = tuple(int(v) for v in manifest["input_shape"])
            class_names = tuple(manifest.get("class_names", DEFAULT_CLASS_NAMES))
            layers = [_layer_from_json(entry, blob, i) for i, entry in enumerate(manifest["layers"])]
        except (KeyError, TypeError, OSError) as exc:
            raise ModelSpecError(f"bad manifest {manifest_path}: {exc}") from exc
        return cls(
            input_shape=input_shape,
            layers=layers,
            model_id=manifest.get("model_id", f"tinycnn:{manifest_path.name}"),
            class_names=class_names,
        )


def _read_tensor(blob: bytes, ref: dict) -> np.ndarray:
    shape = tuple(int(v) for v in ref["shape"])
    count = int(np.prod(shape)) if shape else 1
    offset = int(ref["offset"])
    end = offset + 4 * count
    if end > len(blob):
        raise ModelSpecError(f"tensor at offset {offset} of {count} floats runs past the blob")
    flat = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    return flat.astype(np.float64).reshape(shape)


def _layer_from_json(entry: dict, blob: bytes, index: int) -> Layer:
    kind = entry.get("type")
    if kind == "conv":
        return ConvLayer(weights=_read_tensor(blob, entry["weights"]), stride=int(entry.get("stride", 1)))
    if kind == "relu":
        return ReluLayer()
    if kind == "batchnorm":
        return BatchNormLayer(
            gamma=_read_tensor(blob, entry["gamma"]),
            beta=_read_tensor(blob, entry["beta"]),
            mean=_read_tensor(blob, entry["mean"]),
            var=_read_tensor(blob, entry["var"]),
            eps=float(entry.get("eps", 1e-5)),
        )
    if kind == "flatten":
        return FlattenLayer()
    if kind == "dense":
        return DenseLayer(weights=_read_tensor(blob, entry["weights"]), bias=_read_tensor(blob, entry["bias"]))
    if kind == "dropout":
        return DropoutLayer(rate=float(entry.get("rate", 0.5)))
    if kind == "softmax":
        return SoftmaxLayer()
    raise ModelSpecError(f"layer {index}: unknown type {kind!r}")


def save_tinycnn(
    manifest_path: str | Path,
    input_shape: tuple[int, int, int],
    layers: list[Layer],
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES,
    model_id: str | None = None,
) -> None:
    """Write the manifest + float32 blob pair for a TinyCnn."""
    manifest_path = Path(manifest_path)
    blob = bytearray()

    def store(tensor: np.ndarray) -> dict:
        offset = len(blob)
        blob.extend(np.asarray(tensor, dtype="<f4").tobytes())
        return {"offset": offset, "shape": list(np.asarray(tensor).shape)}

    entries = []
    for layer in layers:
        if isinstance(layer, ConvLayer):
            entries.append({"type": "conv", "stride": layer.stride, "weights": store(layer.weights)})
        elif isinstance(layer, ReluLayer):
            entries.append({"type": "relu"})
        elif isinstance(layer, BatchNormLayer):
            entries.append(
                {
                    "type": "batchnorm",
                    "gamma": store(layer.gamma),
                    "beta": store(layer.beta),
                    "mean": store(layer.mean),
                    "var": store(layer.var),
                    "eps": layer.eps,
                }
            )
        elif isinstance(layer, FlattenLayer):
            entries.append({"type": "flatten"})
        elif isinstance(layer, DenseLayer):
            entries.append({"type": "dense", "weights": store(layer.weights), "bias": store(layer.bias)})
        elif isinstance(layer, DropoutLayer):
            entries.append({"type": "dropout", "rate": layer.rate})
        elif isinstance(layer, SoftmaxLayer):
            entries.append({"type": "softmax"})
        else:
            raise ModelSpecError(f"cannot serialize layer {layer!r}")

    blob_name = manifest_path.stem + ".bin"
    atomic_write_bytes(manifest_path.parent / blob_name, bytes(blob))
    manifest = {
        "input_shape": list(input_shape),
        "class_names": list(class_names),
        "weights_file": blob_name,
        "layers": entries,
    }
    if model_id is not None:
        manifest["model_id"] = model_id
    write_json(manifest_path, manifest)


def cnn_forward(model: TinyCnn, image: RasterImage) -> np.ndarray:
    """Probability vector from one forward pass."""
    return model.forward(image)
