"""RGB raster type and PNG/JPEG/BMP decode plus PNG encode.

Intensities are normalized to [0, 1] at load time (8-bit value v maps to
v / 255); the whole pipeline downstream is scale-free because of this.
"""

from __future__ import annotations

from dataclasses import dataclass
from io import BytesIO
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ContractError, ImageDecodeError
from .fileio import atomic_write_bytes
from .validation import as_pixel_array

_SUPPORTED_FORMATS = {"PNG", "JPEG", "BMP"}


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Immutable RGB pixel grid with float64 intensities in [0, 1].

    `pixels` has shape (height, width, 3) and is read-only; flattening it in
    C order yields the row-major, channel-interleaved layout.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = as_pixel_array(self.pixels)
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 3

    @property
    def data(self) -> np.ndarray:
        """Row-major, channel-interleaved flat view of the intensities."""
        return self.pixels.reshape(-1)

    def same_pixels(self, other: "RasterImage") -> bool:
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)


def load_image(path: str | Path) -> RasterImage:
    """Decode a PNG/JPEG/BMP file into a RasterImage.

    Non-RGB rasters (grayscale, palette, RGBA) are converted to RGB before
    normalization. Missing files raise FileNotFoundError; anything the
    decoder rejects, or a format outside PNG/JPEG/BMP, raises
    ImageDecodeError.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        with Image.open(path) as img:
            fmt = img.format
            if fmt not in _SUPPORTED_FORMATS:
                raise ImageDecodeError(f"unsupported raster format {fmt!r} for {path} (need PNG, JPEG or BMP)")
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
    except OSError as exc:
        raise ImageDecodeError(f"corrupt image file {path}: {exc}") from exc
    return RasterImage(arr)


def encode_png(image: RasterImage) -> bytes:
    """Encode to 8-bit RGB PNG bytes; intensity v quantizes to round(v * 255)."""
    arr = np.rint(image.pixels * 255.0).astype(np.uint8)
    buffer = BytesIO()
    Image.fromarray(arr, mode="RGB").save(buffer, format="PNG")
    return buffer.getvalue()


def save_image(image: RasterImage, path: str | Path) -> None:
    """Write an 8-bit RGB PNG atomically (temp file + rename)."""
    if not isinstance(image, RasterImage):
        raise ContractError("save_image expects a RasterImage")
    atomic_write_bytes(path, encode_png(image))


def image_from_array(pixels) -> RasterImage:
    """Validate an array-like and wrap it as a RasterImage."""
    return RasterImage(np.asarray(pixels, dtype=np.float64))
