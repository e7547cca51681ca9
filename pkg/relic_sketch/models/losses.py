"""
Relic Sketch - Loss Functions
Class-balanced cross-entropy, the FDoG-weighted coarse loss and the side-output fusion loss.
Losses are raw pixel sums; mean_pixel_loss() gives the size-independent figure used in logs.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from relic_sketch.autodiff import ops
from relic_sketch.autodiff.tensor import Tensor, as_tensor
from relic_sketch.errors import ContractError, DegenerateTargetError, DimensionError, ParameterError
from relic_sketch.parsers.image_parser import GrayImage, pixels_of

logger = logging.getLogger(__name__)

PREDICTION_CLIP = 1e-7
DEFAULT_GAMMA = 0.5

MapLike = Union[GrayImage, np.ndarray, Tensor]


@dataclass
class PixelPartition:
    """Flat row-major pixel indices split into positives, negatives and ignored pixels"""

    positives: np.ndarray
    negatives: np.ndarray
    ignored: np.ndarray
    gamma: float

    @property
    def mu(self) -> float:
        total = len(self.positives) + len(self.negatives)
        return len(self.positives) / total if total else 0.0

    @property
    def nu(self) -> float:
        total = len(self.positives) + len(self.negatives)
        return len(self.negatives) / total if total else 0.0


@dataclass
class LossWeights:
    alpha: float = 0.1
    beta: float = 0.9
    side_weight: float = 0.5
    fusion_weights: List[float] = field(default_factory=lambda: [1.0] * 5)
    fused_weight: float = 1.0

    def validate(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ParameterError(f"alpha, beta must be non-negative with a positive sum, got {self.alpha}/{self.beta}")
        if self.side_weight < 0 or self.fused_weight < 0 or any(w < 0 for w in self.fusion_weights):
            raise ParameterError("loss weights must be non-negative")


def partition_pixels(target: MapLike, gamma: float = DEFAULT_GAMMA) -> PixelPartition:
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"gamma must lie in [0, 1), got {gamma}")
    flat = _array(target).reshape(-1)
    positives = np.flatnonzero(flat > gamma)
    negatives = np.flatnonzero(flat == 0.0)
    ignored = np.flatnonzero((flat > 0.0) & (flat <= gamma))
    return PixelPartition(positives, negatives, ignored, gamma)


def _array(value: MapLike) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data
    return pixels_of(value)


def _balance_weights(target: np.ndarray, gamma: float):
    """Per-image mu/nu weight maps for a [N,1,H,W] (or [H,W]) target"""
    images = target.reshape((-1,) + target.shape[-2:])
    pos_w = np.zeros_like(images)
    neg_w = np.zeros_like(images)
    for index, image in enumerate(images):
        part = partition_pixels(image, gamma)
        if len(part.positives) + len(part.negatives) == 0:
            raise DegenerateTargetError(
                f"target {index} has no positive or negative pixels at gamma={gamma}")
        if len(part.positives) == 0:
            logger.warning("⚠️ All-background target: class-balanced loss is zero for this image")
        flat_pos = pos_w[index].reshape(-1)
        flat_neg = neg_w[index].reshape(-1)
        flat_pos[part.positives] = part.nu
        flat_neg[part.negatives] = part.mu
    return pos_w.reshape(target.shape), neg_w.reshape(target.shape)


def balanced_bce(pred: MapLike, target: MapLike, gamma: float = DEFAULT_GAMMA) -> Tensor:
    """
    L = -mu * sum_{Y-} log(1 - p) - nu * sum_{Y+} log(p), mu = |Y+| / (|Y+| + |Y-|),
    nu = |Y-| / (|Y+| + |Y-|), p clipped to [1e-7, 1 - 1e-7]. Batched inputs are
    balanced per image and summed.
    """
    pred_t = as_tensor(pred) if isinstance(pred, Tensor) else Tensor(_array(pred))
    target_a = _array(target)
    if pred_t.data.size != target_a.size or pred_t.shape[-2:] != target_a.shape[-2:]:
        raise DimensionError(f"prediction {list(pred_t.shape)} and target {list(target_a.shape)} differ")
    target_a = target_a.reshape(pred_t.shape)
    pos_w, neg_w = _balance_weights(target_a, gamma)
    return ops.weighted_cross_entropy(pred_t, pos_w, neg_w, eps=PREDICTION_CLIP)


def coarse_loss(prediction: MapLike, fdog_target: MapLike, edge_target: MapLike,
                weights: LossWeights, gamma: float = DEFAULT_GAMMA) -> Tensor:
    """alpha * L(P, Y_fdog) + beta * L(P, Y_edge)"""
    weights.validate()
    terms = []
    if weights.alpha:
        terms.append(ops.scale(balanced_bce(prediction, fdog_target, gamma), weights.alpha))
    if weights.beta:
        terms.append(ops.scale(balanced_bce(prediction, edge_target, gamma), weights.beta))
    return terms[0] if len(terms) == 1 else ops.add(*terms)


def fusion_loss(side_outputs: Sequence[MapLike], fused: MapLike, target: MapLike, weights: LossWeights,
                gamma: float = DEFAULT_GAMMA, levels: Optional[Sequence[int]] = None) -> Tensor:
    """
    sum_m w_m * L(side_m, Y) + w_f * L(fused, Y).
    levels names the 1-based level of each side output; by default the side
    outputs must match the fusion weights one to one.
    """
    weights.validate()
    if levels is None:
        if len(side_outputs) != len(weights.fusion_weights):
            raise ContractError(
                f"expected {len(weights.fusion_weights)} side outputs, got {len(side_outputs)}")
        levels = list(range(1, len(side_outputs) + 1))
    if len(levels) != len(side_outputs):
        raise ContractError(f"{len(side_outputs)} side outputs but {len(levels)} levels")
    for level in levels:
        if not 1 <= level <= len(weights.fusion_weights):
            raise ContractError(f"side output level {level} has no fusion weight")

    terms = [ops.scale(balanced_bce(fused, target, gamma), weights.fused_weight)]
    for level, side in zip(levels, side_outputs):
        terms.append(ops.scale(balanced_bce(side, target, gamma), weights.fusion_weights[level - 1]))
    return ops.add(*terms)


def mean_pixel_loss(loss: Tensor, pixel_count: int) -> float:
    return loss.item() / max(1, pixel_count)
