"""
Relic Sketch - Run Configuration
JSON documents loaded into dataclasses; unknown keys are rejected at every nesting level
"""

import dataclasses
import json
import logging
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from relic_sketch.errors import ConfigError, DataError, ParameterError
from relic_sketch.fdog.flow import FdogParams
from relic_sketch.models.coarse_net import CoarseNetConfig
from relic_sketch.models.fine_net import FineNetConfig
from relic_sketch.models.losses import DEFAULT_GAMMA, LossWeights
from relic_sketch.models.optimizer import OptimizerConfig
from relic_sketch.utils.augmentation import AugmentationSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class TrainConfig:
    seed: int = 0
    steps: int = 200
    finetune_steps: Optional[int] = None  # None -> same as steps
    batch_size: int = 4
    alpha: float = 0.1
    beta: float = 0.9
    gamma: float = DEFAULT_GAMMA
    lambda_side: float = 0.5
    fusion_weights: List[float] = field(default_factory=lambda: [1.0] * 5)
    fused_weight: float = 1.0
    log_every: int = 10
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec.default)
    fdog: FdogParams = field(default_factory=FdogParams)
    coarse_net: CoarseNetConfig = field(default_factory=CoarseNetConfig)
    fine_net: FineNetConfig = field(default_factory=FineNetConfig)

    def validate(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ParameterError(f"alpha and beta must be non-negative with a positive sum, got {self.alpha}/{self.beta}")
        if self.steps < 1:
            raise ParameterError(f"steps must be >= 1, got {self.steps}")
        if self.finetune_steps is not None and self.finetune_steps < 0:
            raise ParameterError(f"finetune_steps must be >= 0, got {self.finetune_steps}")
        if self.batch_size < 1 or self.log_every < 1:
            raise ParameterError("batch_size and log_every must be >= 1")
        if not 0 <= self.gamma < 1:
            raise ParameterError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.lambda_side < 0 or self.fused_weight < 0 or any(w < 0 for w in self.fusion_weights):
            raise ParameterError("loss weights must be non-negative")
        if len(self.fusion_weights) != self.fine_net.depth:
            raise ParameterError(
                f"fusion_weights lists {len(self.fusion_weights)} levels but the fine net has {self.fine_net.depth}")
        self.optimizer.validate()
        self.augmentation.validate()
        self.fdog.validate()
        self.coarse_net.validate()
        self.fine_net.validate()

    @property
    def stage2_steps(self) -> int:
        return self.steps if self.finetune_steps is None else self.finetune_steps

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            alpha=self.alpha,
            beta=self.beta,
            side_weight=self.lambda_side,
            fusion_weights=list(self.fusion_weights),
            fused_weight=self.fused_weight,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _unwrap_optional(hint):
    if typing.get_origin(hint) is Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return hint


def from_dict(cls, data: Any, context: str = "config"):
    """Build dataclass cls from a JSON object, recursing into dataclass-typed fields"""
    if not isinstance(data, dict):
        raise ConfigError(f"{context}: expected a JSON object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{context}: unknown keys {unknown}")

    hints = typing.get_type_hints(cls)
    values = {}
    for name, value in data.items():
        target = _unwrap_optional(hints[name])
        if value is not None and dataclasses.is_dataclass(target):
            value = from_dict(target, value, f"{context}.{name}")
        values[name] = value
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"{context}: {e}") from e


def load_train_config(path: Optional[PathLike] = None) -> TrainConfig:
    """TrainConfig from a JSON file, or the defaults when no path is given"""
    if path is None:
        config = TrainConfig()
    else:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as e:
            raise DataError(f"Config not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        config = from_dict(TrainConfig, data, str(path))
    config.validate()
    return config


def apply_overrides(config: TrainConfig, seed: Optional[int] = None, steps: Optional[int] = None,
                    lr: Optional[float] = None, alpha: Optional[float] = None, beta: Optional[float] = None,
                    gamma: Optional[float] = None, batch_size: Optional[int] = None) -> TrainConfig:
    """Command-line flags win over the file; only flags that were given are applied"""
    if seed is not None:
        config.seed = seed
    if steps is not None:
        config.steps = steps
    if lr is not None:
        config.optimizer.lr = lr
    if alpha is not None:
        config.alpha = alpha
    if beta is not None:
        config.beta = beta
    if gamma is not None:
        config.gamma = gamma
    if batch_size is not None:
        config.batch_size = batch_size
    config.validate()
    return config
