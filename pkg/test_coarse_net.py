#!/usr/bin/env python3
"""
Coarse cascade network tests: shapes, scale enhancement, cascade targets,
gradients, determinism, checkpoints and a short training run
"""

import numpy as np
import pytest

from relic_sketch.autodiff import ops
from relic_sketch.autodiff.tensor import Tensor, make_generator
from relic_sketch.config import TrainConfig
from relic_sketch.errors import CheckpointError, ParameterError
from relic_sketch.models.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from relic_sketch.models.coarse_net import (CoarseNetConfig, build_coarse_net, cascade_targets, coarse_forward,
                                            expected_parameter_count, sem_forward)
from relic_sketch.models.fine_net import FineNetConfig, build_fine_net
from relic_sketch.models.losses import LossWeights, balanced_bce, coarse_loss
from relic_sketch.models.optimizer import OptimizerConfig
from relic_sketch.training.trainer import CoarseSample, train_coarse
from relic_sketch.utils.augmentation import AugmentationSpec
from relic_sketch.utils.synthetic import shape_scene


def tiny_config(stages=3):
    return CoarseNetConfig(stages=stages, convs_per_stage=[1] * stages, channels=[3] * stages,
                           sem_rates=[1, 2], sem_channels=2, head_mid_channels=2)


def test_default_shape_contract():
    net = build_coarse_net(seed=0)
    image = np.random.default_rng(0).random((20, 24))
    outputs = coarse_forward(net, image)
    maps = outputs.side_maps() + [outputs.fused]
    assert len(maps) == 2 * 5 + 1
    for prediction in maps:
        assert prediction.shape == (1, 1, 20, 24)
        assert prediction.data.min() > 0.0 and prediction.data.max() < 1.0


def test_doubling_input_doubles_output():
    net = build_coarse_net(tiny_config(), seed=1)
    small = coarse_forward(net, np.full((12, 10), 0.3)).fused
    large = coarse_forward(net, np.full((24, 20), 0.3)).fused
    assert large.shape[2:] == (2 * small.shape[2], 2 * small.shape[3])


def test_single_stage_net_runs():
    net = build_coarse_net(tiny_config(stages=1), seed=0)
    outputs = coarse_forward(net, np.full((7, 9), 0.5))
    assert len(outputs.s2d) == len(outputs.d2s) == 1
    assert outputs.fused.shape == (1, 1, 7, 9)


def test_zero_heads_predict_one_half():
    net = build_coarse_net(tiny_config(), seed=2)
    for name in net.parameters:
        if name.endswith((".out.weight", ".out.bias")) or name.startswith("fuse."):
            net.parameters[name] = np.zeros_like(net.parameters[name])
    outputs = coarse_forward(net, np.random.default_rng(2).random((8, 8)))
    for prediction in outputs.side_maps() + [outputs.fused]:
        assert np.all(prediction.data == 0.5)


def test_parameter_count_matches_closed_form():
    for config in (CoarseNetConfig(), tiny_config(), tiny_config(stages=1)):
        assert build_coarse_net(config, seed=0).parameter_count() == expected_parameter_count(config)


def test_same_seed_same_parameters():
    a = build_coarse_net(tiny_config(), seed=5).state()
    b = build_coarse_net(tiny_config(), seed=5).state()
    c = build_coarse_net(tiny_config(), seed=6).state()
    assert all(np.array_equal(a[name], b[name]) for name in a)
    assert any(not np.array_equal(a[name], c[name]) for name in a)


def test_invalid_config():
    with pytest.raises(ParameterError):
        CoarseNetConfig(stages=2, channels=[4], convs_per_stage=[1, 1]).validate()
    with pytest.raises(ParameterError):
        CoarseNetConfig(sem_rates=[2, 1]).validate()


def _sem_params(rates, value):
    params = {}
    for rate in rates:
        params[f"rate{rate}.weight"] = Tensor(np.full((1, 1, 3, 3), value))
        params[f"rate{rate}.bias"] = Tensor(np.zeros(1))
    params["fuse.weight"] = Tensor(np.full((1, 1, 1, 1), value))
    params["fuse.bias"] = Tensor(np.zeros(1))
    return params


def test_sem_support_matches_dilation_union():
    delta = np.zeros((1, 1, 11, 11))
    delta[0, 0, 5, 5] = 1.0
    out = sem_forward(Tensor(delta), [1, 2], _sem_params([1, 2], 1.0)).data[0, 0]
    expected = np.zeros((11, 11), dtype=bool)
    for rate in (1, 2):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                expected[5 + rate * dy, 5 + rate * dx] = True
    assert np.array_equal(out != 0, expected)
    rows, cols = np.nonzero(out)
    assert rows.max() - rows.min() + 1 == 5 and cols.max() - cols.min() + 1 == 5


def test_sem_zero_weights_give_zero():
    features = Tensor(np.random.default_rng(0).random((1, 1, 6, 6)))
    assert not sem_forward(features, [1, 2, 4], _sem_params([1, 2, 4], 0.0)).data.any()


def test_sem_single_rate_is_conv_then_fuse():
    rng = np.random.default_rng(1)
    features = Tensor(rng.random((1, 1, 6, 6)))
    params = {"rate1.weight": Tensor(rng.normal(size=(1, 1, 3, 3))), "rate1.bias": Tensor(rng.normal(size=1)),
              "fuse.weight": Tensor(rng.normal(size=(1, 1, 1, 1))), "fuse.bias": Tensor(rng.normal(size=1))}
    direct = ops.conv2d(ops.conv2d(features, params["rate1.weight"], params["rate1.bias"], padding=1),
                        params["fuse.weight"], params["fuse.bias"])
    assert np.array_equal(sem_forward(features, [1], params).data, direct.data)


def test_cascade_targets_with_zero_predictions_equal_label():
    y = (np.random.default_rng(3).random((5, 5)) > 0.5).astype(float)
    zeros = [np.zeros((5, 5))] * 4
    targets = cascade_targets(y, zeros, zeros)
    assert all(np.array_equal(t, y) for t in targets.s2d + targets.d2s)


def test_cascade_targets_explicit_subtraction():
    y = np.full((2, 2), 0.9)
    preds = [np.full((2, 2), v) for v in (0.1, 0.2, 0.3)]
    targets = cascade_targets(y, preds, preds)
    assert np.array_equal(targets.s2d[0], y)
    assert np.allclose(targets.s2d[1], 0.8) and np.allclose(targets.s2d[2], 0.6)
    assert np.array_equal(targets.d2s[2], y)
    assert np.allclose(targets.d2s[1], 0.6) and np.allclose(targets.d2s[0], 0.4)


def test_cascade_targets_are_clamped():
    y = np.array([[1.0, 0.0]])
    preds = [np.array([[0.7, 0.6]])] * 3
    targets = cascade_targets(y, preds, preds)
    for target in targets.s2d + targets.d2s:
        assert target.min() >= 0.0 and target.max() <= 1.0
    assert targets.s2d[2].tolist() == [[0.0, 0.0]]


def _network_loss(net, image, target, params):
    outputs = coarse_forward(net, image, params)
    weights = LossWeights(alpha=0.3, beta=0.7)
    terms = [coarse_loss(outputs.fused, target, target, weights)]
    terms += [balanced_bce(side, target) for side in outputs.side_maps()]
    return ops.add(*terms)


@pytest.mark.parametrize("seed", range(20))
def test_full_network_gradient_check(seed, network_gradient_check):
    net = build_coarse_net(tiny_config(), seed=seed)
    rng = make_generator(100 + seed)
    image = rng.random((16, 16))
    target = (rng.random((16, 16)) > 0.8).astype(float)
    target[0, 0] = 1.0
    compared = network_gradient_check(net, lambda params: _network_loss(net, image, target, params), rng, h=1e-3)
    assert compared >= 0.75 * 2 * len(net.parameters)


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    net = build_coarse_net(tiny_config(), seed=4)
    path = tmp_path / "coarse.rskc"
    save_checkpoint(path, net, step=12, stage="pretrain", train_config={"alpha": 0.1})
    loaded, header = load_checkpoint(path, expected_kind="coarse")
    assert header.step == 12 and header.stage == "pretrain" and header.train_config == {"alpha": 0.1}
    rng = np.random.default_rng(4)
    for _ in range(10):
        image = rng.random((12, 12))
        assert np.array_equal(coarse_forward(net, image).fused.data, coarse_forward(loaded, image).fused.data)


def test_checkpoint_rejects_bad_payloads(tmp_path):
    net = build_coarse_net(tiny_config(), seed=0)
    payload = encode_checkpoint(net)
    assert payload.startswith(MAGIC)
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"XXXXX" + payload[5:])
    with pytest.raises(CheckpointError):
        decode_checkpoint(payload[:-8])
    with pytest.raises(CheckpointError):
        decode_checkpoint(payload.replace(b'"artifact_version": "1"', b'"artifact_version": "9"'))
    path = tmp_path / "fine.rskc"
    save_checkpoint(path, build_fine_net(FineNetConfig(depth=2, base_channels=2), seed=0))
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected_kind="coarse")


def _toy_samples(count=4, size=16):
    rng = make_generator(0)
    samples = []
    for _ in range(count):
        scene = shape_scene(rng, size)
        samples.append(CoarseSample(scene.image, scene.label, scene.label))
    return samples


def test_zero_learning_rate_leaves_parameters_unchanged():
    config = TrainConfig(steps=3, batch_size=2, coarse_net=tiny_config(), augmentation=AugmentationSpec(),
                         optimizer=OptimizerConfig(lr=0.0))
    net = build_coarse_net(config.coarse_net, seed=0)
    before = net.state()
    _, history = train_coarse(net, _toy_samples(), config)
    assert len(history.losses) == 3
    assert all(np.array_equal(before[name], net.parameters[name]) for name in before)


def test_training_is_deterministic_and_reduces_loss():
    config = TrainConfig(steps=40, batch_size=2, coarse_net=tiny_config(), augmentation=AugmentationSpec(),
                         optimizer=OptimizerConfig(lr=0.02))
    _, first = train_coarse(build_coarse_net(config.coarse_net, seed=0), _toy_samples(), config)
    _, second = train_coarse(build_coarse_net(config.coarse_net, seed=0), _toy_samples(), config)
    assert first.losses == second.losses
    assert np.mean(first.pixel_losses[-5:]) < np.mean(first.pixel_losses[:5])


def test_toy_training_halves_the_smoothed_loss():
    net_config = CoarseNetConfig(stages=3, convs_per_stage=[1, 1, 1], channels=[4, 6, 8], sem_rates=[1, 2],
                                 sem_channels=4, head_mid_channels=4)
    config = TrainConfig(steps=200, batch_size=2, coarse_net=net_config, augmentation=AugmentationSpec(),
                         optimizer=OptimizerConfig(lr=0.05))
    _, history = train_coarse(build_coarse_net(net_config, seed=0), _toy_samples(count=8, size=24), config)
    smoothed = history.smoothed()
    assert len(smoothed) == 200
    assert smoothed[-1] <= 0.5 * smoothed[0]


def test_training_with_no_samples():
    with pytest.raises(ParameterError):
        train_coarse(build_coarse_net(tiny_config(), seed=0), [], TrainConfig(coarse_net=tiny_config()))
