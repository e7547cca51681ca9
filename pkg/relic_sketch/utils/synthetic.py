"""
Relic Sketch - Synthetic Data
Seeded toy corpora: shape scenes with outline labels (optionally degraded like an
old painting) and hyperspectral cubes with a planted signal direction
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy import ndimage
from skimage import draw

from relic_sketch.autodiff.tensor import make_generator
from relic_sketch.errors import ParameterError
from relic_sketch.parsers.cube_parser import HyperCube
from relic_sketch.parsers.image_parser import GrayImage, save_gray
from relic_sketch.parsers.manifest_parser import DatasetManifest, ManifestRecord

logger = logging.getLogger(__name__)

KINDS = ("natural", "relic")
TEST_FRACTION = 0.25


@dataclass
class ShapeScene:
    image: np.ndarray
    label: np.ndarray


def _outline(mask: np.ndarray) -> np.ndarray:
    return mask & ~ndimage.binary_erosion(mask, border_value=0)


def _random_shape(rng: np.random.Generator, size: int) -> np.ndarray:
    mask = np.zeros((size, size), dtype=bool)
    choice = int(rng.integers(0, 3))
    margin = max(3, size // 10)
    if choice == 0:
        radius = rng.uniform(size * 0.08, size * 0.22)
        r0, c0 = rng.uniform(margin + radius, size - margin - radius, size=2)
        rr, cc = draw.disk((r0, c0), radius, shape=mask.shape)
    elif choice == 1:
        top, left = rng.integers(margin, size // 2, size=2)
        height, width = rng.integers(size // 6, int(size / 2.5), size=2)
        rr, cc = draw.rectangle((top, left), extent=(height, width), shape=mask.shape)
    else:
        rows = rng.uniform(margin, size - margin, size=3)
        cols = rng.uniform(margin, size - margin, size=3)
        rr, cc = draw.polygon(rows, cols, shape=mask.shape)
    mask[rr, cc] = True
    return mask


def _stroke(rng: np.random.Generator, size: int) -> np.ndarray:
    mask = np.zeros((size, size), dtype=bool)
    points = rng.integers(2, size - 2, size=(3, 2))
    for (r0, c0), (r1, c1) in zip(points, points[1:]):
        rr, cc = draw.line(int(r0), int(c0), int(r1), int(c1))
        mask[rr, cc] = True
    return mask


def _degrade(image: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
    """Cracks, speckle and uneven fading"""
    degraded = image.copy()
    for _ in range(int(rng.integers(1, 4))):
        crack = _stroke(rng, size)
        degraded[crack] = np.minimum(degraded[crack], rng.uniform(0.45, 0.65))
    speckle = rng.random(image.shape) < 0.01
    degraded[speckle] = rng.uniform(0.0, 1.0, size=int(speckle.sum()))
    fading = ndimage.gaussian_filter(rng.random(image.shape), sigma=size / 6.0)
    fading = (fading - fading.min()) / (np.ptp(fading) or 1.0)
    degraded = degraded + (1.0 - degraded) * 0.35 * fading
    return degraded + rng.normal(0.0, 0.03, size=image.shape)


def shape_scene(rng: np.random.Generator, size: int = 64, kind: str = "natural") -> ShapeScene:
    """
    Dark filled shapes on a light ground. Natural scenes label object contours;
    relic scenes add ink strokes (labelled too) and disease degradation.
    """
    if kind not in KINDS:
        raise ParameterError(f"kind must be one of {KINDS}, got {kind!r}")
    if size < 16:
        raise ParameterError(f"scene size must be >= 16, got {size}")
    image = np.full((size, size), rng.uniform(0.8, 0.95))
    label = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        mask = _random_shape(rng, size)
        image[mask] = rng.uniform(0.15, 0.5)
        label |= _outline(mask)
    if kind == "relic":
        for _ in range(int(rng.integers(1, 3))):
            stroke = _stroke(rng, size)
            image[stroke] = rng.uniform(0.05, 0.2)
            label |= stroke
        image = _degrade(image, rng, size)
    else:
        image = image + rng.normal(0.0, 0.02, size=image.shape)
    return ShapeScene(np.clip(image, 0.0, 1.0), label.astype(np.float64))


def generate_shape_corpus(out_dir: Union[str, Path], count: int = 32, size: int = 64, seed: int = 0,
                          kind: str = "natural") -> DatasetManifest:
    """Write count scenes as PNGs and return their manifest (last quarter is the test split)"""
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    out_dir = Path(out_dir).resolve()
    rng = make_generator(seed)
    label_field = "edge_label_path" if kind == "natural" else "sketch_label_path"
    test_start = count - int(count * TEST_FRACTION)

    records = []
    for index in range(count):
        scene = shape_scene(rng, size, kind)
        image_path = out_dir / "images" / f"{kind}_{index:03d}.png"
        label_path = out_dir / "labels" / f"{kind}_{index:03d}.png"
        save_gray(GrayImage(scene.image), image_path)
        save_gray(GrayImage(scene.label), label_path)
        records.append(ManifestRecord(image_path=image_path, split="test" if index >= test_start else "train",
                                      **{label_field: label_path}))
    logger.info(f"✅ Generated {count} {kind} scenes ({size}x{size}) in {out_dir}")
    return DatasetManifest(out_dir, records)


def planted_cube(bands: int = 10, height: int = 64, width: int = 64, seed: int = 0,
                 signal_strength: float = 1.0) -> Tuple[HyperCube, np.ndarray]:
    """
    Smooth rank-1 signal along a random unit spectral direction plus white noise
    whose standard deviation varies by band. Returns the cube and the direction.
    """
    if bands < 2:
        raise ParameterError(f"bands must be >= 2, got {bands}")
    rng = make_generator(seed)
    direction = rng.normal(size=bands)
    direction /= np.linalg.norm(direction)
    pattern = ndimage.gaussian_filter(rng.normal(size=(height, width)), sigma=4.0)
    pattern = signal_strength * pattern / pattern.std()
    noise_scales = rng.uniform(0.02, 0.2, size=bands)
    noise = rng.normal(size=(bands, height, width)) * noise_scales[:, None, None]
    data = direction[:, None, None] * pattern[None] + noise
    return HyperCube(data.astype(np.float32)), direction
