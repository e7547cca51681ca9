"""
Relic Sketch - Coarse Network
Detail-aware bi-directional cascade network: incremental detection stages with
scale enhancement modules, two prediction heads per stage and a 1x1 fusion layer
"""

import logging
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence

import numpy as np

from relic_sketch.autodiff import ops
from relic_sketch.autodiff.tensor import Tensor
from relic_sketch.errors import DimensionError, ParameterError
from relic_sketch.models.layers import Network, conv, conv_relu, image_batch, pad_to_multiple
from relic_sketch.parsers.image_parser import GrayImage, pixels_of

logger = logging.getLogger(__name__)

DIRECTIONS = ("s2d", "d2s")


@dataclass
class CoarseNetConfig:
    stages: int = 5
    convs_per_stage: List[int] = field(default_factory=lambda: [2, 2, 3, 3, 3])
    channels: List[int] = field(default_factory=lambda: [16, 32, 64, 64, 64])
    sem_rates: List[int] = field(default_factory=lambda: [1, 2, 4, 8])
    sem_channels: int = 16
    head_mid_channels: int = 8

    def validate(self):
        if self.stages < 1:
            raise ParameterError(f"stages must be >= 1, got {self.stages}")
        if len(self.channels) != self.stages or len(self.convs_per_stage) != self.stages:
            raise ParameterError(
                f"channels ({len(self.channels)}) and convs_per_stage ({len(self.convs_per_stage)}) "
                f"must both list {self.stages} stages")
        if any(c < 1 for c in self.channels) or any(n < 1 for n in self.convs_per_stage):
            raise ParameterError("channel widths and conv counts must be positive")
        if not self.sem_rates or any(r < 1 for r in self.sem_rates):
            raise ParameterError(f"sem_rates must be non-empty positive dilations, got {self.sem_rates}")
        if any(b <= a for a, b in zip(self.sem_rates, self.sem_rates[1:])):
            raise ParameterError(f"sem_rates must be strictly increasing, got {self.sem_rates}")
        if self.sem_channels < 1 or self.head_mid_channels < 1:
            raise ParameterError("sem_channels and head_mid_channels must be positive")

    @property
    def pad_multiple(self) -> int:
        return 2 ** (self.stages - 1)


class CoarseNet(Network):
    kind = "coarse"

    def __init__(self, config: CoarseNetConfig, seed: int):
        config.validate()
        super().__init__(config, seed)
        in_channels = 1
        for s in range(1, config.stages + 1):
            width = config.channels[s - 1]
            for k in range(1, config.convs_per_stage[s - 1] + 1):
                self.add_conv(f"stage{s}.conv{k}", in_channels, width, 3)
                in_channels = width
            for rate in config.sem_rates:
                self.add_conv(f"stage{s}.sem.rate{rate}", width, config.sem_channels, 3)
            self.add_conv(f"stage{s}.sem.fuse", config.sem_channels, config.sem_channels, 1)
            for direction in DIRECTIONS:
                self.add_conv(f"stage{s}.{direction}.mid", config.sem_channels, config.head_mid_channels, 1)
                self.add_conv(f"stage{s}.{direction}.out", config.head_mid_channels, 1, 1)
        self.add_conv("fuse", 2 * config.stages, 1, 1)


@dataclass
class CoarseOutputs:
    """All maps are [1,1,H,W] tensors at the input size"""

    s2d: List[Tensor]
    d2s: List[Tensor]
    fused: Tensor

    def side_maps(self) -> List[Tensor]:
        return list(self.s2d) + list(self.d2s)

    def images(self):
        def to_image(t: Tensor) -> GrayImage:
            return GrayImage.clipped(t.data[0, 0])
        return [to_image(t) for t in self.s2d], [to_image(t) for t in self.d2s], to_image(self.fused)


@dataclass
class CascadeTargets:
    s2d: List[np.ndarray]
    d2s: List[np.ndarray]


def build_coarse_net(config: Optional[CoarseNetConfig] = None, seed: int = 0) -> CoarseNet:
    net = CoarseNet(config or CoarseNetConfig(), seed)
    logger.info(f"✅ Built {net}")
    return net


def expected_parameter_count(config: CoarseNetConfig) -> int:
    """Closed-form parameter count for a coarse net built from config"""
    total = 0
    in_channels = 1
    sem = config.sem_channels
    mid = config.head_mid_channels
    for s in range(config.stages):
        width = config.channels[s]
        for _ in range(config.convs_per_stage[s]):
            total += in_channels * width * 9 + width
            in_channels = width
        total += len(config.sem_rates) * (width * sem * 9 + sem)
        total += sem * sem + sem
        total += 2 * (sem * mid + mid + mid + 1)
    return total + 2 * config.stages + 1


def sem_forward(features: Tensor, rates: Sequence[int], params: Mapping[str, Tensor], prefix: str = "") -> Tensor:
    """
    Scale enhancement: one 3x3 dilated conv per rate (padding = rate keeps the
    size), the branches summed, then a 1x1 fusion conv
    """
    branches = [conv(features, params, f"{prefix}rate{rate}", dilation=rate, padding=rate) for rate in rates]
    merged = branches[0] if len(branches) == 1 else ops.add(*branches)
    return conv(merged, params, f"{prefix}fuse")


def coarse_forward(net: CoarseNet, image, params: Optional[Mapping[str, Tensor]] = None) -> CoarseOutputs:
    """
    Runs every stage on the edge-padded input. Head logits are bilinearly resized
    to the padded size, cropped back to the input size and squashed by a sigmoid;
    the fused map is a sigmoid over a 1x1 conv of the 2S side probabilities.
    """
    config: CoarseNetConfig = net.config
    params = params if params is not None else net.bind()
    batch, (height, width) = image_batch(image)
    x = pad_to_multiple(batch, config.pad_multiple)
    padded_h, padded_w = x.shape[2:]

    sides = {direction: [] for direction in DIRECTIONS}
    for s in range(1, config.stages + 1):
        if s > 1:
            x = ops.max_pool2d(x, 2, 2)
        for k in range(1, config.convs_per_stage[s - 1] + 1):
            x = conv_relu(x, params, f"stage{s}.conv{k}")
        enhanced = sem_forward(x, config.sem_rates, params, prefix=f"stage{s}.sem.")
        for direction in DIRECTIONS:
            logits = conv(conv(enhanced, params, f"stage{s}.{direction}.mid"), params, f"stage{s}.{direction}.out")
            if logits.shape[2:] != (padded_h, padded_w):
                logits = ops.resize_bilinear(logits, padded_h, padded_w)
            logits = ops.crop(logits, 0, 0, height, width)
            sides[direction].append(ops.sigmoid(logits))

    stacked = ops.concat(sides["s2d"] + sides["d2s"], axis=1)
    fused = ops.sigmoid(conv(stacked, params, "fuse"))
    return CoarseOutputs(sides["s2d"], sides["d2s"], fused)


def _plane(value, shape) -> np.ndarray:
    data = value.data if isinstance(value, Tensor) else pixels_of(value)
    if data.size != shape[0] * shape[1]:
        raise DimensionError(f"prediction of shape {list(data.shape)} does not match target {shape}")
    return data.reshape(shape)


def cascade_targets(target, s2d_preds: Sequence, d2s_preds: Sequence) -> CascadeTargets:
    """
    Y_s^{s2d} = Y - sum_{i<s} P_i^{s2d} and Y_s^{d2s} = Y - sum_{i>s} P_i^{d2s},
    computed on detached predictions and clamped to [0, 1]
    """
    y = pixels_of(target)
    if y.ndim != 2:
        y = y.reshape(y.shape[-2:])
    if len(s2d_preds) != len(d2s_preds):
        raise DimensionError(f"{len(s2d_preds)} s2d predictions vs {len(d2s_preds)} d2s predictions")
    s2d = [_plane(p, y.shape) for p in s2d_preds]
    d2s = [_plane(p, y.shape) for p in d2s_preds]

    s2d_targets = []
    running = np.zeros_like(y)
    for pred in s2d:
        s2d_targets.append(np.clip(y - running, 0.0, 1.0))
        running = running + pred

    d2s_targets = [None] * len(d2s)
    running = np.zeros_like(y)
    for index in range(len(d2s) - 1, -1, -1):
        d2s_targets[index] = np.clip(y - running, 0.0, 1.0)
        running = running + d2s[index]
    return CascadeTargets(s2d_targets, d2s_targets)


def coarse_predict(net: CoarseNet, image) -> GrayImage:
    """Fused coarse probability map for one image, computed on constants"""
    return coarse_forward(net, image).images()[2]
