"""
Relic Sketch - Image Parser
Reads and writes single-channel intensity maps (PNG and binary PGM).
Internally a sketch line is 1.0 and background 0.0; display inversion happens only here.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from relic_sketch.errors import ContractError, DataError, DimensionError, ImageFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
SUPPORTED_FORMATS = {"PNG", "PPM"}  # Pillow reports PGM files as PPM
_SUFFIX_FORMATS = {".png": "PNG", ".pgm": "PPM"}


class GrayImage:
    """Row-major intensity map with every pixel in [0, 1]"""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        array = np.array(pixels, dtype=np.float64)
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
            raise DimensionError(f"GrayImage needs a non-empty 2-D array, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ContractError("GrayImage pixels must be finite")
        if array.min() < 0.0 or array.max() > 1.0:
            raise ContractError(f"GrayImage pixels must lie in [0, 1], got [{array.min()}, {array.max()}]")
        self.pixels = array

    @classmethod
    def clipped(cls, pixels) -> "GrayImage":
        return cls(np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self):
        return self.pixels.shape

    def inverted(self) -> "GrayImage":
        return GrayImage(1.0 - self.pixels)

    def __eq__(self, other) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"GrayImage({self.height}x{self.width})"


def pixels_of(image) -> np.ndarray:
    """Float64 pixel array for a GrayImage or anything array-like"""
    if isinstance(image, GrayImage):
        return image.pixels
    return np.asarray(image, dtype=np.float64)


def _to_unit_range(img: Image.Image) -> np.ndarray:
    mode = img.mode
    if mode == "1":
        return np.asarray(img, dtype=np.float64)
    if mode in ("L", "LA"):
        return np.asarray(img.getchannel(0), dtype=np.float64) / 255.0
    if mode.startswith("I;16") or mode == "I":
        raw = np.asarray(img, dtype=np.float64)
        return raw / 65535.0
    if mode in ("P", "PA"):
        img = img.convert("RGBA" if "transparency" in img.info or mode == "PA" else "RGB")
    if img.mode not in ("RGB", "RGBA"):
        raise ImageFormatError(f"Unsupported pixel mode {mode}")
    rgb = np.asarray(img, dtype=np.float64)[..., :3] / 255.0
    r, g, b = LUMA_WEIGHTS
    return r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]


def load_gray(path: PathLike, display_invert: bool = False) -> GrayImage:
    """Load an 8/16-bit PNG or PGM as luminance in [0, 1]"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"Image not found: {path}")
    try:
        with Image.open(path) as img:
            if img.format not in SUPPORTED_FORMATS:
                raise ImageFormatError(f"{path}: format {img.format} not supported (PNG or PGM only)")
            pixels = _to_unit_range(img)
    except UnidentifiedImageError as e:
        raise ImageFormatError(f"{path}: not a readable image ({e})") from e
    except OSError as e:
        raise DataError(f"Failed to read {path}: {e}") from e

    pixels = np.clip(pixels, 0.0, 1.0)
    if display_invert:
        pixels = 1.0 - pixels
    logger.debug(f"Loaded {path} ({pixels.shape[0]}x{pixels.shape[1]})")
    return GrayImage(pixels)


def save_gray(image: GrayImage, path: PathLike, display_invert: bool = False) -> None:
    """Write an 8-bit grayscale PNG or PGM (chosen by suffix)"""
    path = Path(path)
    fmt = _SUFFIX_FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise ImageFormatError(f"{path}: output must end in .png or .pgm")
    pixels = pixels_of(image)
    if display_invert:
        pixels = 1.0 - pixels
    quantized = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(quantized).save(path, format=fmt)
    except OSError as e:
        raise DataError(f"Failed to write {path}: {e}") from e
    logger.debug(f"Saved {path}")
