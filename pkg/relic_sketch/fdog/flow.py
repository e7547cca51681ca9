"""
Relic Sketch - Edge Tangent Flow
Sobel gradients, tangent initialisation and kernel-based smoothing of the tangent field
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from relic_sketch.errors import ContractError, DimensionError, ParameterError
from relic_sketch.parsers.image_parser import GrayImage, pixels_of

logger = logging.getLogger(__name__)

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T

# Sobel responses on [0, 1] images below this are roundoff, not structure
GRADIENT_EPS = 1e-9


@dataclass
class FdogParams:
    """Parameters of the coherent line extractor"""

    radius: float = 5.0
    etf_iters: int = 3
    sigma_c: float = 1.0
    sigma_m: float = 3.0
    rho: float = 0.99
    tau: float = 0.5
    line_iters: int = 1
    eta: float = 1.0
    intensity_scale: float = 255.0

    def validate(self):
        if self.radius < 1:
            raise ParameterError(f"radius must be >= 1, got {self.radius}")
        if self.etf_iters < 0 or self.line_iters < 1:
            raise ParameterError(f"etf_iters >= 0 and line_iters >= 1 required, got {self.etf_iters}/{self.line_iters}")
        if self.sigma_c <= 0 or self.sigma_m <= 0:
            raise ParameterError(f"sigma_c and sigma_m must be positive, got {self.sigma_c}/{self.sigma_m}")
        if not 0 < self.rho < 1:
            raise ParameterError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0 < self.tau <= 1:
            raise ParameterError(f"tau must lie in (0, 1], got {self.tau}")
        if self.intensity_scale <= 0:
            raise ParameterError(f"intensity_scale must be positive, got {self.intensity_scale}")

    @property
    def sigma_s(self) -> float:
        return 1.6 * self.sigma_c


class FlowField:
    """
    Per-pixel tangents (tx along columns, ty along rows) plus the gradient
    magnitude normalised by its global maximum.
    """

    __slots__ = ("tx", "ty", "magnitude")

    def __init__(self, tx: np.ndarray, ty: np.ndarray, magnitude: np.ndarray):
        if tx.shape != ty.shape or tx.shape != magnitude.shape:
            raise ContractError(f"FlowField components disagree: {tx.shape}, {ty.shape}, {magnitude.shape}")
        self.tx = tx
        self.ty = ty
        self.magnitude = magnitude

    @property
    def shape(self):
        return self.tx.shape

    def copy(self) -> "FlowField":
        return FlowField(self.tx.copy(), self.ty.copy(), self.magnitude.copy())


def _normalize(vx: np.ndarray, vy: np.ndarray):
    """Unit vectors where the norm is positive, exact (0, 0) elsewhere"""
    norm = np.hypot(vx, vy)
    nonzero = norm > 0
    safe = np.where(nonzero, norm, 1.0)
    return np.where(nonzero, vx / safe, 0.0), np.where(nonzero, vy / safe, 0.0)


def sobel(pixels: np.ndarray):
    gx = ndimage.correlate(pixels, SOBEL_X, mode="nearest")
    gy = ndimage.correlate(pixels, SOBEL_Y, mode="nearest")
    return gx, gy


def gradient(image: GrayImage) -> FlowField:
    """Sobel gradient rotated 90 degrees counterclockwise into the initial tangent field"""
    pixels = pixels_of(image)
    if pixels.shape[0] < 3 or pixels.shape[1] < 3:
        raise DimensionError(f"gradient() needs at least 3x3 pixels, got {pixels.shape}")
    gx, gy = sobel(pixels)
    magnitude = np.hypot(gx, gy)
    flat = magnitude <= GRADIENT_EPS
    gx[flat] = 0.0
    gy[flat] = 0.0
    magnitude[flat] = 0.0
    peak = magnitude.max()
    magnitude = magnitude / peak if peak > 0 else np.zeros_like(magnitude)
    tx, ty = _normalize(-gy, gx)
    return FlowField(tx, ty, magnitude)


def neighborhood_offsets(radius: float):
    """Integer offsets (dy, dx) strictly inside the disk of the given radius"""
    reach = int(np.ceil(radius))
    offsets = []
    for dy in range(-reach, reach + 1):
        for dx in range(-reach, reach + 1):
            if dy * dy + dx * dx < radius * radius:
                offsets.append((dy, dx))
    return offsets


def _shifted(values: np.ndarray, dy: int, dx: int, fill: float = 0.0) -> np.ndarray:
    """out[i, j] = values[i + dy, j + dx], fill outside the image"""
    h, w = values.shape
    out = np.full_like(values, fill)
    if abs(dy) >= h or abs(dx) >= w:
        return out
    rows_dst = slice(max(0, -dy), min(h, h - dy))
    cols_dst = slice(max(0, -dx), min(w, w - dx))
    rows_src = slice(max(0, dy), min(h, h + dy))
    cols_src = slice(max(0, dx), min(w, w + dx))
    out[rows_dst, cols_dst] = values[rows_src, cols_src]
    return out


def etf_step(field: FlowField, radius: float, eta: float = 1.0) -> FlowField:
    """
    One smoothing pass of the tangent field:
    t_new(x) = normalize(sum over |x - y| < r of phi * t(y) * w_m * w_d)
    with w_m = (1 + tanh(eta * (g(y) - g(x)))) / 2, w_d = |t(x).t(y)|, phi = sign(t(x).t(y)).
    Neighbours outside the image do not contribute.
    """
    tx, ty, mag = field.tx, field.ty, field.magnitude
    acc_x = np.zeros_like(tx)
    acc_y = np.zeros_like(ty)
    for dy, dx in neighborhood_offsets(radius):
        ntx = _shifted(tx, dy, dx)
        nty = _shifted(ty, dy, dx)
        nmag = _shifted(mag, dy, dx)
        dot = tx * ntx + ty * nty
        phi = np.where(dot > 0, 1.0, -1.0)
        w_m = 0.5 * (1.0 + np.tanh(eta * (nmag - mag)))
        weight = phi * w_m * np.abs(dot)
        acc_x += weight * ntx
        acc_y += weight * nty
    new_tx, new_ty = _normalize(acc_x, acc_y)
    return FlowField(new_tx, new_ty, mag.copy())


def etf(image: GrayImage, params: FdogParams) -> FlowField:
    params.validate()
    field = gradient(image)
    for iteration in range(params.etf_iters):
        field = etf_step(field, params.radius, params.eta)
        logger.debug(f"ETF iteration {iteration + 1}/{params.etf_iters} done")
    return field


def fill_orientation(field: FlowField, sigma: float) -> FlowField:
    """
    Give zero-tangent pixels the dominant orientation of nearby tangents.
    Uses the Gaussian-smoothed structure tensor sum(t t^T), so opposite tangents
    on both flanks of a thin line agree. Pixels with no oriented neighbours, or an
    isotropic neighbourhood, stay (0, 0). Nonzero tangents are left untouched.
    """
    empty = (field.tx == 0) & (field.ty == 0)
    if not empty.any() or empty.all():
        return field
    jxx = ndimage.gaussian_filter(field.tx * field.tx, sigma)
    jxy = ndimage.gaussian_filter(field.tx * field.ty, sigma)
    jyy = ndimage.gaussian_filter(field.ty * field.ty, sigma)
    anisotropy = np.hypot(jxx - jyy, 2.0 * jxy)
    oriented = empty & (anisotropy > GRADIENT_EPS)
    theta = 0.5 * np.arctan2(2.0 * jxy, jxx - jyy)
    tx = np.where(oriented, np.cos(theta), field.tx)
    ty = np.where(oriented, np.sin(theta), field.ty)
    # cos(pi / 2) is not exactly zero
    tx = np.where(np.abs(tx) < GRADIENT_EPS, 0.0, tx)
    ty = np.where(np.abs(ty) < GRADIENT_EPS, 0.0, ty)
    return FlowField(tx, ty, field.magnitude.copy())
