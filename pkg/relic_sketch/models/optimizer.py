"""
Relic Sketch - Optimizer
SGD with momentum, step learning-rate decay and global gradient-norm clipping
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from relic_sketch.errors import ParameterError

logger = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    lr: float = 1e-2
    momentum: float = 0.9
    decay_factor: float = 0.1
    decay_step: Optional[int] = None  # None -> halfway through the run
    clip_norm: float = 1.0  # 0 disables clipping

    def validate(self):
        if self.lr < 0:
            raise ParameterError(f"lr must be non-negative, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ParameterError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not 0 < self.decay_factor <= 1:
            raise ParameterError(f"decay_factor must lie in (0, 1], got {self.decay_factor}")
        if self.decay_step is not None and self.decay_step < 1:
            raise ParameterError(f"decay_step must be >= 1, got {self.decay_step}")
        if self.clip_norm < 0:
            raise ParameterError(f"clip_norm must be non-negative, got {self.clip_norm}")


class SGDMomentum:
    def __init__(self, config: OptimizerConfig, total_steps: int):
        config.validate()
        self.config = config
        self.decay_step = config.decay_step or max(1, total_steps // 2)
        self.velocity: Dict[str, np.ndarray] = {}
        self.step_count = 0

    def learning_rate(self, step: Optional[int] = None) -> float:
        step = self.step_count if step is None else step
        decays = step // self.decay_step
        return self.config.lr * self.config.decay_factor ** decays

    def clip(self, grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        if not self.config.clip_norm:
            return grads
        norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
        if norm <= self.config.clip_norm or norm == 0.0:
            return grads
        factor = self.config.clip_norm / norm
        return {name: g * factor for name, g in grads.items()}

    def step(self, parameters: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> float:
        """Update parameters in place; returns the learning rate used"""
        lr = self.learning_rate()
        grads = self.clip(grads)
        for name, grad in grads.items():
            velocity = self.velocity.get(name)
            if velocity is None:
                velocity = np.zeros_like(grad)
            velocity = self.config.momentum * velocity + grad
            self.velocity[name] = velocity
            if lr:
                parameters[name] = parameters[name] - lr * velocity
        self.step_count += 1
        return lr
