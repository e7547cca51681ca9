"""
Relic Sketch - Network Building Blocks
Named parameter storage, seeded initialisation and the padding helpers both networks share
"""

import logging
from collections import OrderedDict
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from relic_sketch.autodiff import ops
from relic_sketch.autodiff.tensor import Graph, Tensor, make_generator
from relic_sketch.errors import ContractError, DimensionError
from relic_sketch.parsers.image_parser import pixels_of

logger = logging.getLogger(__name__)


def he_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: float) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def bilinear_kernel(size: int) -> np.ndarray:
    """size x size bilinear interpolation stencil used to seed learned upsamplers"""
    factor = (size + 1) // 2
    center = factor - 1 if size % 2 == 1 else factor - 0.5
    grid = np.arange(size)
    profile = 1.0 - np.abs(grid - center) / factor
    return np.outer(profile, profile)


class Network:
    """
    Base for both networks: an ordered map of named float64 arrays plus the
    config and seed they were built from. Forward passes read the parameters
    through bind(), either as constants or as leaves of a Graph.
    """

    kind = "network"

    def __init__(self, config, seed: int):
        self.config = config
        self.seed = int(seed)
        self.parameters: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._rng = make_generator(seed)

    # construction helpers, called in a fixed order from subclasses

    def add_conv(self, name: str, in_channels: int, out_channels: int, size: int, bias: bool = True):
        shape = (out_channels, in_channels, size, size)
        self.parameters[f"{name}.weight"] = he_uniform(self._rng, shape, in_channels * size * size)
        if bias:
            self.parameters[f"{name}.bias"] = np.zeros(out_channels)

    def add_transposed_conv(self, name: str, in_channels: int, out_channels: int, size: int, stride: int,
                            bilinear: bool = False):
        shape = (in_channels, out_channels, size, size)
        if bilinear:
            kernel = np.zeros(shape)
            stencil = bilinear_kernel(size)
            for channel in range(min(in_channels, out_channels)):
                kernel[channel, channel] = stencil
            self.parameters[f"{name}.weight"] = kernel
        else:
            fan_in = max(1.0, in_channels * size * size / float(stride * stride))
            self.parameters[f"{name}.weight"] = he_uniform(self._rng, shape, fan_in)
        self.parameters[f"{name}.bias"] = np.zeros(out_channels)

    # runtime

    def bind(self, graph: Optional[Graph] = None) -> Dict[str, Tensor]:
        if graph is None:
            return {name: Tensor(value) for name, value in self.parameters.items()}
        return {name: graph.parameter(name, value) for name, value in self.parameters.items()}

    def parameter_count(self) -> int:
        return int(sum(value.size for value in self.parameters.values()))

    def load_state(self, state: Mapping[str, np.ndarray]):
        missing = set(self.parameters) - set(state)
        extra = set(state) - set(self.parameters)
        if missing or extra:
            raise ContractError(f"parameter sets differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, value in state.items():
            value = np.asarray(value, dtype=np.float64)
            if value.shape != self.parameters[name].shape:
                raise DimensionError(f"{name}: expected shape {self.parameters[name].shape}, got {value.shape}")
            self.parameters[name] = value.copy()

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, value.copy()) for name, value in self.parameters.items())

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.parameter_count()} parameters, seed={self.seed})"


def conv(x: Tensor, params: Mapping[str, Tensor], name: str, **kwargs) -> Tensor:
    return ops.conv2d(x, params[f"{name}.weight"], params.get(f"{name}.bias"), **kwargs)


def conv_relu(x: Tensor, params: Mapping[str, Tensor], name: str) -> Tensor:
    return ops.relu(conv(x, params, name, padding=1))


def image_batch(image) -> Tuple[Tensor, Tuple[int, int]]:
    """Single-channel input as a [1,1,H,W] constant tensor plus its spatial size"""
    data = image.data if isinstance(image, Tensor) else pixels_of(image)
    if data.ndim == 2:
        data = data[None, None]
    if data.ndim != 4 or data.shape[:2] != (1, 1):
        raise DimensionError(f"expected one single-channel image, got shape {list(data.shape)}")
    return Tensor(data), data.shape[2:]


def pad_to_multiple(batch: Tensor, multiple: int) -> Tensor:
    """Edge-replicate bottom/right so both sides are multiples of `multiple`"""
    h, w = batch.shape[2:]
    pad_h = (-h) % multiple
    pad_w = (-w) % multiple
    if pad_h == 0 and pad_w == 0:
        return batch
    return Tensor(np.pad(batch.data, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="edge"))
