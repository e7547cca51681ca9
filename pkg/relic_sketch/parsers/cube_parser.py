"""
Relic Sketch - Hyperspectral Cube Parser
Raw little-endian float32 band-sequential cubes with a JSON sidecar
{bands, height, width, wavelengths?}
"""

import json
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from relic_sketch.errors import ContractError, CubeFormatError, DataError, DimensionError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CUBE_DTYPE = np.dtype("<f4")
SIDECAR_KEYS = {"bands", "height", "width", "wavelengths"}


class HyperCube:
    """B x H x W stack of co-registered bands"""

    __slots__ = ("data", "wavelengths")

    def __init__(self, data, wavelengths: Optional[List[float]] = None):
        array = np.asarray(data)
        if array.ndim != 3:
            raise DimensionError(f"HyperCube needs a 3-D (bands, height, width) array, got {array.shape}")
        if array.shape[0] < 2:
            raise DimensionError(f"HyperCube needs at least 2 bands, got {array.shape[0]}")
        if not np.all(np.isfinite(array)):
            raise ContractError("HyperCube data must be finite")
        if wavelengths is not None and len(wavelengths) != array.shape[0]:
            raise ContractError(f"{len(wavelengths)} wavelengths for {array.shape[0]} bands")
        self.data = array
        self.wavelengths = list(wavelengths) if wavelengths is not None else None

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def pixel_matrix(self) -> np.ndarray:
        """(H*W, B) float64 matrix, one spectrum per row"""
        return self.data.reshape(self.bands, -1).T.astype(np.float64)

    def __repr__(self) -> str:
        return f"HyperCube({self.bands} bands, {self.height}x{self.width})"


def _read_sidecar(meta_path: Path) -> dict:
    try:
        meta = json.loads(meta_path.read_text())
    except FileNotFoundError as e:
        raise DataError(f"Cube sidecar not found: {meta_path}") from e
    except json.JSONDecodeError as e:
        raise CubeFormatError(f"{meta_path}: invalid JSON ({e})") from e
    if not isinstance(meta, dict):
        raise CubeFormatError(f"{meta_path}: sidecar must be a JSON object")
    unknown = set(meta) - SIDECAR_KEYS
    if unknown:
        raise CubeFormatError(f"{meta_path}: unknown sidecar keys {sorted(unknown)}")
    for key in ("bands", "height", "width"):
        value = meta.get(key)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise CubeFormatError(f"{meta_path}: '{key}' must be a positive integer, got {value!r}")
    return meta


def load_cube(data_path: PathLike, meta_path: PathLike) -> HyperCube:
    data_path, meta_path = Path(data_path), Path(meta_path)
    meta = _read_sidecar(meta_path)
    bands, height, width = meta["bands"], meta["height"], meta["width"]
    if not data_path.exists():
        raise DataError(f"Cube data not found: {data_path}")

    size = data_path.stat().st_size
    expected = bands * height * width * CUBE_DTYPE.itemsize
    if size != expected:
        raise CubeFormatError(
            f"{data_path}: {size} bytes but sidecar declares {bands}x{height}x{width} float32 ({expected} bytes)")

    raw = np.fromfile(data_path, dtype=CUBE_DTYPE)
    data = raw.reshape(bands, height, width).astype(np.float32)
    if not np.all(np.isfinite(data)):
        raise CubeFormatError(f"{data_path}: cube contains non-finite values")
    try:
        cube = HyperCube(data, meta.get("wavelengths"))
    except (ContractError, DimensionError) as e:
        raise CubeFormatError(f"{data_path}: {e}") from e
    logger.info(f"✅ Loaded {cube} from {data_path}")
    return cube


def save_cube(cube: HyperCube, data_path: PathLike, meta_path: PathLike) -> None:
    data_path, meta_path = Path(data_path), Path(meta_path)
    meta = {"bands": cube.bands, "height": cube.height, "width": cube.width}
    if cube.wavelengths is not None:
        meta["wavelengths"] = [float(w) for w in cube.wavelengths]
    try:
        data_path.parent.mkdir(parents=True, exist_ok=True)
        meta_path.parent.mkdir(parents=True, exist_ok=True)
        np.ascontiguousarray(cube.data, dtype=CUBE_DTYPE).tofile(data_path)
        meta_path.write_text(json.dumps(meta, indent=2))
    except OSError as e:
        raise DataError(f"Failed to write cube {data_path}: {e}") from e
    logger.debug(f"Saved {cube} to {data_path}")
