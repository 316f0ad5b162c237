"""Exception types shared across the package."""


class LimescopeError(Exception):
    """Base class for every package-specific error."""


class ContractError(LimescopeError, ValueError):
    """A documented precondition was violated by the caller."""


class ImageDecodeError(LimescopeError):
    """Raster file exists but is not a decodable PNG/JPEG/BMP."""


class EmptyDatasetError(LimescopeError):
    """Dataset scan found no images under any class folder."""


class UndefinedMetricError(LimescopeError):
    """Requested statistic is undefined for the inputs (e.g. zero weighted variance)."""


class ModelSpecError(LimescopeError):
    """Model specification string or weights manifest is invalid."""


class ModelTransportError(LimescopeError):
    """External model process or endpoint is unreachable, dead, or timed out."""


class ModelProtocolError(LimescopeError):
    """External model answered with a malformed message."""

    def __init__(self, message: str, line: str | None = None):
        if line is not None:
            message = f"{message}: {line!r}"
        super().__init__(message)
        self.line = line


class ModelValidationError(LimescopeError):
    """External model answered with an invalid probability vector."""


class BatchPredictionError(LimescopeError):
    """Model failed on one sample of a perturbation batch."""

    def __init__(self, sample_index: int, message: str):
        super().__init__(f"sample {sample_index}: {message}")
        self.sample_index = sample_index
