"""
Relic Sketch - Minimum Noise Fraction
Shift-difference noise estimation, the noise-whitened eigen-rotation ordered by
signal-to-noise ratio, MNF denoising and single-band selection
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg

from relic_sketch.errors import DimensionError, NumericError, ParameterError
from relic_sketch.parsers.cube_parser import HyperCube
from relic_sketch.parsers.image_parser import GrayImage

logger = logging.getLogger(__name__)

RIDGE_FACTOR = 1e-8


@dataclass
class MnfTransform:
    """
    transform V maps centred spectra to components (z = (x - mean) V);
    loadings A = noise_cov V map them back (x = z A^T + mean).
    """

    eigenvalues: np.ndarray
    transform: np.ndarray
    loadings: np.ndarray
    noise_cov: np.ndarray
    mean: np.ndarray

    def forward(self, cube: HyperCube) -> np.ndarray:
        centred = cube.pixel_matrix() - self.mean
        return centred @ self.transform

    def inverse(self, components: np.ndarray) -> np.ndarray:
        return components @ self.loadings.T + self.mean


def noise_covariance(cube: HyperCube) -> np.ndarray:
    """Covariance of (x(i, j) - x(i, j + 1)) / sqrt(2) over all horizontal neighbours"""
    if cube.width < 2:
        raise DimensionError(f"noise estimation needs width >= 2, got {cube.width}")
    data = cube.data.astype(np.float64)
    diffs = (data[:, :, :-1] - data[:, :, 1:]) / np.sqrt(2.0)
    samples = diffs.reshape(cube.bands, -1)
    if samples.shape[1] < 2:
        return np.zeros((cube.bands, cube.bands))
    cov = np.cov(samples)
    return 0.5 * (cov + cov.T)


def regularize(noise_cov: np.ndarray) -> np.ndarray:
    bands = noise_cov.shape[0]
    ridge = RIDGE_FACTOR * np.trace(noise_cov) / bands
    return noise_cov + ridge * np.eye(bands)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive"""
    peaks = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[peaks, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def mnf_from_covariances(data_cov: np.ndarray, noise_cov: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Solve data_cov v = lambda noise_cov v with V^T noise_cov V = I.
    Returns (eigenvalues descending, V, A = noise_cov V). noise_cov is used as given.
    """
    data_cov = np.asarray(data_cov, dtype=np.float64)
    noise_cov = np.asarray(noise_cov, dtype=np.float64)
    if data_cov.shape != noise_cov.shape or data_cov.ndim != 2 or data_cov.shape[0] != data_cov.shape[1]:
        raise DimensionError(f"covariances must be matching square matrices, got {data_cov.shape} and {noise_cov.shape}")
    if not (np.all(np.isfinite(data_cov)) and np.all(np.isfinite(noise_cov))):
        raise NumericError("covariance matrices contain non-finite values")
    try:
        eigenvalues, vectors = scipy.linalg.eigh(data_cov, noise_cov)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"noise covariance is not positive definite after regularization: {e}") from e

    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    vectors = _fix_signs(vectors[:, order])
    return eigenvalues, vectors, noise_cov @ vectors


def mnf_transform(cube: HyperCube) -> MnfTransform:
    noise = regularize(noise_covariance(cube))
    pixels = cube.pixel_matrix()
    data_cov = np.cov(pixels, rowvar=False)
    data_cov = 0.5 * (data_cov + data_cov.T)
    eigenvalues, transform, loadings = mnf_from_covariances(data_cov, noise)
    logger.info(f"📊 MNF eigenvalues (top 5): {np.round(eigenvalues[:5], 4).tolist()}")
    return MnfTransform(eigenvalues, transform, loadings, noise, pixels.mean(axis=0))


def mnf(cube: HyperCube) -> Tuple[HyperCube, np.ndarray]:
    """Components ordered by descending SNR, plus their eigenvalues"""
    rotation = mnf_transform(cube)
    components = rotation.forward(cube).T.reshape(cube.bands, cube.height, cube.width)
    return HyperCube(components), rotation.eigenvalues


def mnf_denoise(cube: HyperCube, keep: int) -> HyperCube:
    """Zero every component past the first keep and rotate back to band space"""
    if not 1 <= keep <= cube.bands:
        raise ParameterError(f"keep must lie in 1..{cube.bands}, got {keep}")
    rotation = mnf_transform(cube)
    components = rotation.forward(cube)
    components[:, keep:] = 0.0
    restored = rotation.inverse(components).T.reshape(cube.bands, cube.height, cube.width)
    return HyperCube(restored, cube.wavelengths)


def select_band(cube: HyperCube, index: int) -> GrayImage:
    """Band index (0-based) min-max normalised to [0, 1]; a constant band becomes 0.5"""
    if not 0 <= index < cube.bands:
        raise ParameterError(f"band index must lie in 0..{cube.bands - 1}, got {index}")
    band = cube.data[index].astype(np.float64)
    low, high = band.min(), band.max()
    if high == low:
        logger.warning(f"⚠️ Band {index} is constant; returning a flat 0.5 image")
        return GrayImage(np.full(band.shape, 0.5))
    return GrayImage.clipped((band - low) / (high - low))
