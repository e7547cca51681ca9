"""
Relic Sketch - Augmentation
Flips, quarter-turn rotations and seeded crops applied in lockstep to an image and its labels
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from relic_sketch.autodiff.tensor import make_generator
from relic_sketch.errors import ContractError, ParameterError
from relic_sketch.parsers.image_parser import GrayImage, pixels_of

logger = logging.getLogger(__name__)


@dataclass
class CropSpec:
    size: int
    count: int
    seed: int = 0


@dataclass
class AugmentationSpec:
    """
    Empty spec is the identity. The training default (AugmentationSpec.default())
    is a horizontal flip and all four quarter turns.
    """

    horizontal_flip: bool = False
    vertical_flip: bool = False
    rotations: List[int] = field(default_factory=lambda: [0])
    crop: Optional[CropSpec] = None

    @classmethod
    def default(cls) -> "AugmentationSpec":
        return cls(horizontal_flip=True, rotations=[0, 1, 2, 3])

    def validate(self):
        for turn in self.rotations:
            if turn not in (0, 1, 2, 3):
                raise ParameterError(f"rotations are quarter turns 0..3, got {turn}")
        if self.crop is not None and (self.crop.size < 1 or self.crop.count < 1):
            raise ParameterError(f"crop size and count must be positive, got {self.crop}")

    @property
    def variant_count(self) -> int:
        flips = 1 + int(self.horizontal_flip) + int(self.vertical_flip)
        rotations = len(self.rotations) or 1
        crops = self.crop.count if self.crop else 1
        return flips * rotations * crops


def augment_stack(maps: Sequence[np.ndarray], spec: AugmentationSpec) -> List[List[np.ndarray]]:
    """Augment several same-sized maps with identical geometric transforms"""
    spec.validate()
    shape = maps[0].shape
    for other in maps[1:]:
        if other.shape != shape:
            raise ContractError(f"Augmented maps must share dimensions, got {shape} and {other.shape}")
    if spec.crop is not None and spec.crop.size > min(shape):
        raise ContractError(f"crop size {spec.crop.size} exceeds image size {shape}")

    flips = [lambda a: a]
    if spec.horizontal_flip:
        flips.append(lambda a: a[:, ::-1])
    if spec.vertical_flip:
        flips.append(lambda a: a[::-1, :])
    rotations = spec.rotations or [0]
    rng = make_generator(spec.crop.seed) if spec.crop else None

    variants = []
    for flip in flips:
        for turn in rotations:
            transformed = [np.ascontiguousarray(np.rot90(flip(m), k=turn)) for m in maps]
            if spec.crop is None:
                variants.append(transformed)
                continue
            size = spec.crop.size
            h, w = transformed[0].shape
            for _ in range(spec.crop.count):
                top = int(rng.integers(0, h - size + 1))
                left = int(rng.integers(0, w - size + 1))
                variants.append([m[top:top + size, left:left + size].copy() for m in transformed])
    return variants


def augment(image: GrayImage, label: GrayImage, spec: AugmentationSpec) -> List[Tuple[GrayImage, GrayImage]]:
    """Every geometric transform is applied identically to image and label"""
    variants = augment_stack([pixels_of(image), pixels_of(label)], spec)
    return [(GrayImage(a), GrayImage(b)) for a, b in variants]
