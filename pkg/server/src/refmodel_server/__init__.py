"""Reference model server for the base64-PNG prediction protocol.

Speaks newline-delimited JSON over stdio or HTTP: one request object per
image, {"id": <int>, "image": "<base64 PNG>"}, answered by {"id", "probs"}
or {"id", "error"}. Stub mode needs no ML stack; pretrained mode optionally
wraps a saved Keras model behind the same wire format.
"""

from .rules import BrightnessRule, FixedTableRule, PredictionRule
from .server import ServerConfig, handle_request, serve_http, serve_stdio

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "PredictionRule",
    "BrightnessRule",
    "FixedTableRule",
    "ServerConfig",
    "handle_request",
    "serve_stdio",
    "serve_http",
]
