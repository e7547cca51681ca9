"""
Relic Sketch - Fine Network
Multiscale U-Net refiner. Level numbering: level `depth` is the last decoder
layer (full resolution), level 1 is the bottleneck; level m sits at 1/2^(depth-m).
Side heads predict a correction to the logit of the coarse input, so a net with
zeroed heads hands its input through unchanged.
"""

import logging
from dataclasses import dataclass
from typing import List, Mapping, Optional

import numpy as np
from scipy.special import logit

from relic_sketch.autodiff import ops
from relic_sketch.autodiff.tensor import Tensor
from relic_sketch.errors import ParameterError
from relic_sketch.models.layers import Network, conv, conv_relu, image_batch, pad_to_multiple
from relic_sketch.parsers.image_parser import GrayImage

logger = logging.getLogger(__name__)

# coarse probabilities are clipped before taking the logit
INPUT_EPS = 1e-6


@dataclass
class FineNetConfig:
    depth: int = 5
    base_channels: int = 16
    fuse_levels: Optional[List[int]] = None

    def validate(self):
        if self.depth < 2:
            raise ParameterError(f"depth must be >= 2, got {self.depth}")
        if self.base_channels < 1:
            raise ParameterError(f"base_channels must be positive, got {self.base_channels}")
        if self.fuse_levels is not None:
            if not self.fuse_levels:
                raise ParameterError("fuse_levels must not be empty")
            if any(not 1 <= level <= self.depth for level in self.fuse_levels):
                raise ParameterError(f"fuse_levels must lie in 1..{self.depth}, got {self.fuse_levels}")
            if len(set(self.fuse_levels)) != len(self.fuse_levels):
                raise ParameterError(f"fuse_levels contains duplicates: {self.fuse_levels}")
            if self.depth not in self.fuse_levels:
                raise ParameterError(f"fuse_levels must include the full-resolution level {self.depth}")

    @property
    def levels(self) -> List[int]:
        """Active side-output levels in ascending order"""
        return sorted(self.fuse_levels) if self.fuse_levels is not None else list(range(1, self.depth + 1))

    @property
    def pad_multiple(self) -> int:
        return 2 ** (self.depth - 1)

    def width(self, block: int) -> int:
        return self.base_channels * 2 ** (block - 1)

    def level_block(self, level: int) -> int:
        """Encoder block whose resolution and width the given decoder level shares"""
        return self.depth - level + 1


class FineNet(Network):
    kind = "fine"

    def __init__(self, config: FineNetConfig, seed: int):
        config.validate()
        super().__init__(config, seed)
        in_channels = 1
        for block in range(1, config.depth + 1):
            width = config.width(block)
            self.add_conv(f"enc{block}.conv1", in_channels, width, 3)
            self.add_conv(f"enc{block}.conv2", width, width, 3)
            in_channels = width
        for level in range(2, config.depth + 1):
            block = config.level_block(level)
            width = config.width(block)
            self.add_transposed_conv(f"dec{level}.up", config.width(block + 1), width, 2, 2)
            self.add_conv(f"dec{level}.conv1", 2 * width, width, 3)
            self.add_conv(f"dec{level}.conv2", width, width, 3)
        for level in config.levels:
            self.add_conv(f"side{level}.score", config.width(config.level_block(level)), 1, 1)
            self.parameters[f"side{level}.score.weight"][:] = 0.0
            gap = config.depth - level
            if gap > 0:
                stride = 2 ** gap
                self.add_transposed_conv(f"side{level}.up", 1, 1, 2 * stride, stride, bilinear=True)
        self.add_conv("fuse", len(config.levels), 1, 1)
        # fusion starts from the full-resolution side alone
        self.parameters["fuse.weight"][:] = 0.0
        self.parameters["fuse.weight"][0, -1] = 1.0


@dataclass
class FineOutputs:
    side_outputs: List[Tensor]
    fused: Tensor
    levels: List[int]

    def images(self):
        def to_image(t: Tensor) -> GrayImage:
            return GrayImage.clipped(t.data[0, 0])
        return [to_image(t) for t in self.side_outputs], to_image(self.fused)


def build_fine_net(config: Optional[FineNetConfig] = None, seed: int = 0) -> FineNet:
    net = FineNet(config or FineNetConfig(), seed)
    logger.info(f"✅ Built {net} with side-output levels {net.config.levels}")
    return net


def expected_parameter_count(config: FineNetConfig) -> int:
    total = 0
    in_channels = 1
    for block in range(1, config.depth + 1):
        c = config.width(block)
        total += in_channels * c * 9 + c + c * c * 9 + c
        in_channels = c
    for level in range(2, config.depth + 1):
        c = config.width(config.level_block(level))
        total += 2 * c * 4 * c + c
        total += 2 * c * c * 9 + c + c * c * 9 + c
    for level in config.levels:
        total += config.width(config.level_block(level)) + 1
        gap = config.depth - level
        if gap > 0:
            total += (2 * 2 ** gap) ** 2 + 1
    return total + len(config.levels) + 1


def fine_forward(net: FineNet, coarse, params: Optional[Mapping[str, Tensor]] = None) -> FineOutputs:
    """
    Encoder/decoder pass over the coarse probability map. Every configured level
    emits a side output: 1x1 score, learned upsampling and crop, added to the
    input logit, then sigmoid. The fused map is the sigmoid of the input logit
    plus a biased 1x1 conv over the concatenated side scores.
    """
    config: FineNetConfig = net.config
    params = params if params is not None else net.bind()
    batch, (height, width) = image_batch(coarse)
    prior = Tensor(logit(np.clip(batch.data, INPUT_EPS, 1.0 - INPUT_EPS)))
    x = pad_to_multiple(batch, config.pad_multiple)
    padded_h, padded_w = x.shape[2:]

    skips = {}
    for block in range(1, config.depth + 1):
        if block > 1:
            x = ops.max_pool2d(x, 2, 2)
        x = conv_relu(conv_relu(x, params, f"enc{block}.conv1"), params, f"enc{block}.conv2")
        skips[block] = x

    features = {1: x}
    for level in range(2, config.depth + 1):
        block = config.level_block(level)
        up = ops.transposed_conv2d(x, params[f"dec{level}.up.weight"], params[f"dec{level}.up.bias"], stride=2)
        x = ops.concat([up, skips[block]], axis=1)
        x = conv_relu(conv_relu(x, params, f"dec{level}.conv1"), params, f"dec{level}.conv2")
        features[level] = x

    scores, sides = [], []
    for level in config.levels:
        score = conv(features[level], params, f"side{level}.score")
        gap = config.depth - level
        if gap > 0:
            stride = 2 ** gap
            score = ops.transposed_conv2d(score, params[f"side{level}.up.weight"],
                                          params[f"side{level}.up.bias"], stride=stride)
            score = ops.crop(score, stride // 2, stride // 2, padded_h, padded_w)
        score = ops.crop(score, 0, 0, height, width)
        scores.append(score)
        sides.append(ops.sigmoid(ops.add(score, prior)))

    stacked = scores[0] if len(scores) == 1 else ops.concat(scores, axis=1)
    fused = ops.sigmoid(ops.add(conv(stacked, params, "fuse"), prior))
    return FineOutputs(sides, fused, config.levels)


def fine_predict(net: FineNet, coarse) -> GrayImage:
    return fine_forward(net, coarse).images()[1]
