#!/usr/bin/env python3
"""
Multiscale U-Net refiner tests
"""

import numpy as np
import pytest

from relic_sketch.autodiff.tensor import make_generator
from relic_sketch.config import TrainConfig
from relic_sketch.errors import ParameterError, TrainingDivergedError
from relic_sketch.models.fine_net import FineNetConfig, build_fine_net, expected_parameter_count, fine_forward
from relic_sketch.models.layers import bilinear_kernel
from relic_sketch.models.losses import LossWeights, fusion_loss
from relic_sketch.models.optimizer import OptimizerConfig
from relic_sketch.training.pipeline import FUSE_LEVELS_GRID
from relic_sketch.training.trainer import FineSample, train_fine
from relic_sketch.utils.augmentation import AugmentationSpec


@pytest.mark.parametrize("levels", FUSE_LEVELS_GRID)
def test_shape_contract_for_every_ablation_subset(levels):
    net = build_fine_net(FineNetConfig(depth=5, base_channels=2, fuse_levels=levels), seed=0)
    outputs = fine_forward(net, np.random.default_rng(0).random((18, 21)))
    assert len(outputs.side_outputs) == len(levels)
    assert outputs.levels == sorted(levels)
    for prediction in outputs.side_outputs + [outputs.fused]:
        assert prediction.shape == (1, 1, 18, 21)
        assert prediction.data.min() > 0.0 and prediction.data.max() < 1.0


def test_default_config_emits_five_side_outputs():
    outputs = fine_forward(build_fine_net(seed=0), np.full((16, 16), 0.2))
    assert len(outputs.side_outputs) == 5
    assert outputs.fused.shape == (1, 1, 16, 16)


def test_minimal_depth_runs():
    outputs = fine_forward(build_fine_net(FineNetConfig(depth=2, base_channels=2), seed=0), np.zeros((16, 16)))
    assert len(outputs.side_outputs) == 2


def test_parameter_count_matches_closed_form():
    for config in (FineNetConfig(), FineNetConfig(depth=3, base_channels=4, fuse_levels=[3, 1]),
                   FineNetConfig(depth=2, base_channels=1, fuse_levels=[2])):
        assert build_fine_net(config, seed=0).parameter_count() == expected_parameter_count(config)


def test_zeroed_heads_hand_the_coarse_map_through():
    net = build_fine_net(FineNetConfig(depth=3, base_channels=2), seed=1)
    for name in net.parameters:
        if name.startswith(("side", "fuse.")) and ".up." not in name:
            net.parameters[name] = np.zeros_like(net.parameters[name])
    coarse = np.random.default_rng(1).uniform(0.01, 0.99, (8, 8))
    outputs = fine_forward(net, coarse)
    for prediction in outputs.side_outputs + [outputs.fused]:
        assert np.allclose(prediction.data[0, 0], coarse, atol=1e-12)
    assert np.allclose(fine_forward(net, np.full((8, 8), 0.5)).fused.data, 0.5)


def test_fresh_refiner_reproduces_its_input():
    for levels in ([5], [1, 2, 3, 4, 5]):
        net = build_fine_net(FineNetConfig(depth=5, base_channels=2, fuse_levels=levels), seed=4)
        coarse = np.random.default_rng(4).uniform(0.05, 0.95, (20, 17))
        outputs = fine_forward(net, coarse)
        assert np.allclose(outputs.fused.data[0, 0], coarse, atol=1e-12)
        assert all(np.allclose(side.data[0, 0], coarse, atol=1e-12) for side in outputs.side_outputs)


def test_side_upsamplers_start_bilinear():
    net = build_fine_net(FineNetConfig(depth=3, base_channels=2), seed=0)
    assert np.array_equal(net.parameters["side1.up.weight"][0, 0], bilinear_kernel(8))
    assert "side3.up.weight" not in net.parameters


def test_deepest_only_is_plain_encoder_decoder():
    full = build_fine_net(FineNetConfig(depth=3, base_channels=2), seed=3)
    single = build_fine_net(FineNetConfig(depth=3, base_channels=2, fuse_levels=[3]), seed=3)
    shared = {name: value for name, value in full.parameters.items() if name.startswith(("enc", "dec"))}
    for name, value in shared.items():
        single.parameters[name] = value.copy()
    single.parameters["side3.score.weight"] = full.parameters["side3.score.weight"].copy()
    single.parameters["side3.score.bias"] = full.parameters["side3.score.bias"].copy()
    image = np.random.default_rng(3).random((8, 8))
    side_full = fine_forward(full, image).side_outputs[-1].data
    side_single = fine_forward(single, image).side_outputs[0].data
    assert np.array_equal(side_full, side_single)


def test_invalid_fuse_levels():
    with pytest.raises(ParameterError):
        FineNetConfig(depth=5, fuse_levels=[4, 3]).validate()
    with pytest.raises(ParameterError):
        FineNetConfig(depth=5, fuse_levels=[5, 5]).validate()
    with pytest.raises(ParameterError):
        FineNetConfig(depth=5, fuse_levels=[]).validate()
    with pytest.raises(ParameterError):
        FineNetConfig(depth=1).validate()


def _loss(net, coarse, target, params):
    outputs = fine_forward(net, coarse, params)
    weights = LossWeights(fusion_weights=[1.0, 0.5, 2.0])
    return fusion_loss(outputs.side_outputs, outputs.fused, target, weights, levels=outputs.levels)


@pytest.mark.parametrize("seed", range(20))
def test_full_network_gradient_check(seed, network_gradient_check):
    net = build_fine_net(FineNetConfig(depth=3, base_channels=2), seed=seed)
    rng = make_generator(200 + seed)
    # fresh score heads are zero, which would hide the trunk gradients
    for name in net.parameters:
        if name.startswith("side") and ".score." in name:
            net.parameters[name] = rng.normal(0.0, 0.5, net.parameters[name].shape)
    coarse = rng.random((16, 16))
    target = (rng.random((16, 16)) > 0.8).astype(float)
    target[3, 3] = 1.0
    compared = network_gradient_check(net, lambda params: _loss(net, coarse, target, params), rng, h=1e-3)
    assert compared >= 0.75 * 2 * len(net.parameters)


def _fine_samples(count=3, size=16):
    rng = np.random.default_rng(0)
    samples = []
    for _ in range(count):
        target = np.zeros((size, size))
        target[rng.integers(2, size - 2), :] = 1.0
        coarse = np.clip(0.6 * target + 0.2 * rng.random((size, size)), 0, 1)
        samples.append(FineSample(coarse, target))
    return samples


def _fine_config(**optimizer):
    return TrainConfig(steps=3, batch_size=2, augmentation=AugmentationSpec(), fusion_weights=[1.0] * 3,
                       fine_net=FineNetConfig(depth=3, base_channels=2), optimizer=OptimizerConfig(**optimizer))


def test_zero_learning_rate_leaves_parameters_unchanged():
    config = _fine_config(lr=0.0)
    net = build_fine_net(config.fine_net, seed=0)
    before = net.state()
    train_fine(net, _fine_samples(), config)
    assert all(np.array_equal(before[name], net.parameters[name]) for name in before)


def test_fine_training_is_deterministic():
    config = _fine_config(lr=0.01)
    _, first = train_fine(build_fine_net(config.fine_net, seed=0), _fine_samples(), config)
    _, second = train_fine(build_fine_net(config.fine_net, seed=0), _fine_samples(), config)
    assert first.losses == second.losses
    assert len(first.learning_rates) == 3


def test_toy_training_halves_the_smoothed_loss():
    config = _fine_config(lr=0.05)
    config.steps = 200
    _, history = train_fine(build_fine_net(config.fine_net, seed=0), _fine_samples(count=6), config)
    smoothed = history.smoothed()
    assert smoothed[-1] <= 0.5 * smoothed[0]
    # per-pixel figures are the raw sums over the batch pixels
    assert np.isclose(history.pixel_losses[0], history.losses[0] / (2 * 16 * 16))


def test_nan_input_diverges_with_the_initial_parameters():
    config = _fine_config(lr=0.01)
    net = build_fine_net(config.fine_net, seed=0)
    initial = net.state()
    samples = _fine_samples()
    for sample in samples:
        sample.coarse[0, 0] = np.nan
    with pytest.raises(TrainingDivergedError) as excinfo:
        train_fine(net, samples, config)
    assert excinfo.value.step == 0
    assert all(np.array_equal(initial[name], excinfo.value.last_parameters[name]) for name in initial)


def test_runaway_learning_rate_keeps_a_finite_snapshot():
    config = _fine_config(lr=1e300, clip_norm=0.0)
    config.steps = 50
    net = build_fine_net(config.fine_net, seed=0)
    with pytest.raises(TrainingDivergedError) as excinfo:
        train_fine(net, _fine_samples(), config)
    snapshot = excinfo.value.last_parameters
    assert snapshot is not None and set(snapshot) == set(net.parameters)
    assert all(np.isfinite(value).all() for value in snapshot.values())
