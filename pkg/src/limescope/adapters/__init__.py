"""Black-box model adapters: analytic oracles, a tiny CNN, external processes."""

from .base import DEFAULT_CLASS_NAMES, ModelAdapter, stack_images
from .external import (
    DEFAULT_TIMEOUT,
    TIMEOUT_ENV_VAR,
    HttpAdapter,
    ProcessAdapter,
    external_predict,
    image_to_base64_png,
)
from .factory import model_from_spec
from .oracle import PIXEL_MATCH_TOL, MonotoneOracle, PlantedOracle, oracle_predict
from .tinycnn import (
    BatchNormLayer,
    ConvLayer,
    DenseLayer,
    DropoutLayer,
    FlattenLayer,
    ReluLayer,
    SoftmaxLayer,
    TinyCnn,
    batchnorm_infer,
    cnn_forward,
    conv2d,
    dense,
    flatten,
    relu,
    save_tinycnn,
    softmax,
)

__all__ = [
    "DEFAULT_CLASS_NAMES",
    "DEFAULT_TIMEOUT",
    "TIMEOUT_ENV_VAR",
    "PIXEL_MATCH_TOL",
    "ModelAdapter",
    "stack_images",
    "PlantedOracle",
    "MonotoneOracle",
    "oracle_predict",
    "TinyCnn",
    "ConvLayer",
    "ReluLayer",
    "BatchNormLayer",
    "FlattenLayer",
    "DenseLayer",
    "DropoutLayer",
    "SoftmaxLayer",
    "conv2d",
    "relu",
    "batchnorm_infer",
    "softmax",
    "dense",
    "flatten",
    "cnn_forward",
    "save_tinycnn",
    "ProcessAdapter",
    "HttpAdapter",
    "external_predict",
    "image_to_base64_png",
    "model_from_spec",
]
