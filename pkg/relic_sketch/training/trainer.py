"""
Relic Sketch - Trainer
Seeded, single-threaded training loops for the coarse and fine networks
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from relic_sketch.autodiff import ops
from relic_sketch.autodiff.tensor import Graph, Tensor, backward, make_generator
from relic_sketch.config import TrainConfig
from relic_sketch.errors import ManifestError, ParameterError, TrainingDivergedError
from relic_sketch.models.coarse_net import CoarseNet, CoarseOutputs, cascade_targets, coarse_forward, coarse_predict
from relic_sketch.models.fine_net import FineNet, fine_forward
from relic_sketch.models.losses import (LossWeights, balanced_bce, coarse_loss, fusion_loss, mean_pixel_loss,
                                        partition_pixels)
from relic_sketch.models.optimizer import SGDMomentum
from relic_sketch.parsers.image_parser import load_gray, pixels_of
from relic_sketch.parsers.manifest_parser import DatasetManifest
from relic_sketch.utils.augmentation import AugmentationSpec, augment_stack

logger = logging.getLogger(__name__)


@dataclass
class CoarseSample:
    image: np.ndarray
    fdog: np.ndarray
    edge: np.ndarray


@dataclass
class FineSample:
    coarse: np.ndarray
    target: np.ndarray


@dataclass
class TrainingHistory:
    stage: Optional[str] = None
    losses: List[float] = field(default_factory=list)
    pixel_losses: List[float] = field(default_factory=list)
    learning_rates: List[float] = field(default_factory=list)

    def record(self, loss: float, pixel_loss: float, lr: float):
        self.losses.append(loss)
        self.pixel_losses.append(pixel_loss)
        self.learning_rates.append(lr)

    def smoothed(self, window: int = 10) -> List[float]:
        """Trailing moving average of the per-pixel loss"""
        values = np.asarray(self.pixel_losses, dtype=np.float64)
        if values.size == 0:
            return []
        cumulative = np.cumsum(np.concatenate([[0.0], values]))
        starts = np.maximum(0, np.arange(1, values.size + 1) - window)
        counts = np.arange(1, values.size + 1) - starts
        return list((cumulative[1:] - cumulative[starts]) / counts)

    def to_dict(self):
        return asdict(self)


def coarse_samples_from_manifest(manifest: DatasetManifest, label_field: str = "edge_label_path",
                                 split: str = "train") -> List[CoarseSample]:
    """(image, Y_FDoG, Y_edge) triples; label_field picks the sketch label when fine-tuning on relics"""
    records = manifest.require(label_field, split)
    missing = [r.name for r in records if r.fdog_target_path is None]
    if missing:
        raise ManifestError(f"{len(missing)} records have no FDoG target; run prepare-targets first: {missing[:5]}")
    return [
        CoarseSample(
            load_gray(r.image_path).pixels,
            load_gray(r.fdog_target_path).pixels,
            load_gray(getattr(r, label_field)).pixels,
        )
        for r in records
    ]


def fine_samples_from_manifest(manifest: DatasetManifest, coarse_net: CoarseNet,
                               label_field: str = "sketch_label_path", split: str = "train") -> List[FineSample]:
    """Coarse predictions from the frozen coarse net paired with ground-truth sketches"""
    records = manifest.require(label_field, split)
    return [
        FineSample(coarse_predict(coarse_net, load_gray(r.image_path)).pixels,
                   load_gray(getattr(r, label_field)).pixels)
        for r in records
    ]


def _expand(stacks: Sequence[Sequence[np.ndarray]], spec: AugmentationSpec) -> List[List[np.ndarray]]:
    expanded = []
    for maps in stacks:
        expanded.extend(augment_stack([pixels_of(m) for m in maps], spec))
    return expanded


def _has_positives(target: np.ndarray, gamma: float) -> bool:
    return len(partition_pixels(target, gamma).positives) > 0


def coarse_sample_loss(outputs: CoarseOutputs, fdog: np.ndarray, edge: np.ndarray,
                       weights: LossWeights, gamma: float) -> Tensor:
    """
    coarse_loss on the fused map plus lambda_side times the class-balanced loss of
    every side prediction against its cascade target. Cascade targets without
    positives contribute exactly zero and are skipped.
    """
    total = coarse_loss(outputs.fused, fdog[None, None], edge[None, None], weights, gamma)
    if not weights.side_weight:
        return total
    targets = cascade_targets(edge, outputs.s2d, outputs.d2s)
    side_terms = []
    for preds, goals in ((outputs.s2d, targets.s2d), (outputs.d2s, targets.d2s)):
        for pred, goal in zip(preds, goals):
            if _has_positives(goal, gamma):
                side_terms.append(balanced_bce(pred, goal[None, None], gamma))
    if not side_terms:
        return total
    side = side_terms[0] if len(side_terms) == 1 else ops.add(*side_terms)
    return ops.add(total, ops.scale(side, weights.side_weight))


def fine_sample_loss(net: FineNet, sample: FineSample, params, weights: LossWeights, gamma: float) -> Tensor:
    outputs = fine_forward(net, sample.coarse, params)
    target = sample.target[None, None]
    return fusion_loss(outputs.side_outputs, outputs.fused, target, weights, gamma, levels=outputs.levels)


def _run_loop(net, samples: list, config: TrainConfig, steps: int, stage: Optional[str], sample_loss) -> TrainingHistory:
    if not samples:
        raise ParameterError("training needs at least one sample")
    history = TrainingHistory(stage=stage)
    if steps == 0:
        return history

    rng = make_generator(config.seed)
    optimizer = SGDMomentum(config.optimizer, steps)
    batch_size = min(config.batch_size, len(samples))
    label = stage or net.kind
    logger.info(f"🚀 Training {net.kind} net [{label}]: {steps} steps, {len(samples)} samples, batch {batch_size}")

    for step in range(steps):
        batch = rng.choice(len(samples), size=batch_size, replace=False)
        graph = Graph()
        params = net.bind(graph)
        terms = [sample_loss(samples[index], params) for index in batch]
        total = terms[0] if len(terms) == 1 else ops.add(*terms)
        value = total.item()
        pixels = sum(samples[index].pixel_count for index in batch)
        # parameters are known finite here: checked after every update
        if not math.isfinite(value):
            raise TrainingDivergedError(f"non-finite loss at step {step}", step, last_parameters=net.state())

        grads = backward(graph, total)
        before = net.state()
        lr = optimizer.step(net.parameters, grads)
        if not all(np.isfinite(weights).all() for weights in net.parameters.values()):
            raise TrainingDivergedError(f"non-finite parameters after update at step {step}", step,
                                        last_parameters=before)
        per_pixel = mean_pixel_loss(total, pixels)
        history.record(value, per_pixel, lr)
        if (step + 1) % config.log_every == 0 or step == steps - 1:
            logger.info(f"📊 [{label}] step {step + 1}/{steps} loss={value:.4f} "
                        f"per-pixel={per_pixel:.6f} lr={lr:.2e}")
    return history


class _Prepared:
    """Augmented training sample with its pixel count"""

    __slots__ = ("maps", "pixel_count")

    def __init__(self, maps: List[np.ndarray]):
        self.maps = maps
        self.pixel_count = int(maps[0].size)


def train_coarse(net: CoarseNet, dataset: Union[DatasetManifest, Sequence[CoarseSample]], config: TrainConfig,
                 steps: Optional[int] = None, stage: Optional[str] = None,
                 label_field: str = "edge_label_path") -> Tuple[CoarseNet, TrainingHistory]:
    """
    Per step: a seeded batch, each sample forwarded on one shared graph, losses
    summed, one optimizer update. label_field selects Y_edge when a manifest is given.
    """
    config.validate()
    if isinstance(dataset, DatasetManifest):
        dataset = coarse_samples_from_manifest(dataset, label_field)
    stacks = [(s.image, s.fdog, s.edge) for s in dataset]
    samples = [_Prepared(maps) for maps in _expand(stacks, config.augmentation)]
    weights = config.loss_weights()

    def sample_loss(sample: _Prepared, params):
        image, fdog, edge = sample.maps
        outputs = coarse_forward(net, image, params)
        return coarse_sample_loss(outputs, fdog, edge, weights, config.gamma)

    history = _run_loop(net, samples, config, config.steps if steps is None else steps, stage, sample_loss)
    return net, history


def train_fine(net: FineNet, dataset: Sequence[FineSample], config: TrainConfig,
               steps: Optional[int] = None, stage: Optional[str] = None) -> Tuple[FineNet, TrainingHistory]:
    """Optimises the fusion loss on (coarse prediction, ground-truth sketch) pairs"""
    config.validate()
    stacks = [(s.coarse, s.target) for s in dataset]
    samples = [_Prepared(maps) for maps in _expand(stacks, config.augmentation)]
    weights = config.loss_weights()

    def sample_loss(sample: _Prepared, params):
        coarse, target = sample.maps
        return fine_sample_loss(net, FineSample(coarse, target), params, weights, config.gamma)

    history = _run_loop(net, samples, config, config.steps if steps is None else steps, stage, sample_loss)
    return net, history
