#!/usr/bin/env python3
"""
Shared test fixtures
Finite-difference checks of whole networks with ReLU/max-pool switch tracking
"""

import numpy as np
import pytest
from numpy.lib.stride_tricks import sliding_window_view

from relic_sketch.autodiff import ops
from relic_sketch.autodiff.tensor import Graph, as_tensor, backward


class SwitchRecorder:
    """Records which branch every relu and max-pool window took during a forward pass"""

    def __init__(self, monkeypatch):
        self.pattern = []
        relu, max_pool2d = ops.relu, ops.max_pool2d

        def recording_relu(x):
            self.pattern.append(as_tensor(x).data > 0)
            return relu(x)

        def recording_max_pool2d(x, window, stride):
            windows = sliding_window_view(as_tensor(x).data, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
            self.pattern.append(windows.reshape(*windows.shape[:4], -1).argmax(axis=-1))
            return max_pool2d(x, window, stride)

        monkeypatch.setattr(ops, "relu", recording_relu)
        monkeypatch.setattr(ops, "max_pool2d", recording_max_pool2d)

    def run(self, fn):
        self.pattern = []
        result = fn()
        return result, self.pattern


def _same_switches(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@pytest.fixture
def network_gradient_check(monkeypatch):
    """
    check(net, loss_at, rng, h, per_parameter) compares backward() with central
    differences on random entries of every parameter. Entries whose +-h
    perturbation flips a relu or moves a pooling winner are redrawn. Returns the
    number of entries compared.
    """
    recorder = SwitchRecorder(monkeypatch)

    def check(net, loss_at, rng, h=1e-3, per_parameter=2, attempts=8, tolerance=1e-4):
        graph = Graph()
        loss, base = recorder.run(lambda: loss_at(net.bind(graph)))
        grads = backward(graph, loss)
        compared = 0
        for name, value in net.parameters.items():
            found = 0
            for _ in range(attempts):
                if found == per_parameter:
                    break
                index = tuple(int(rng.integers(0, n)) for n in value.shape)
                original = value[index]
                value[index] = original + h
                plus, plus_switches = recorder.run(lambda: loss_at(net.bind()).item())
                value[index] = original - h
                minus, minus_switches = recorder.run(lambda: loss_at(net.bind()).item())
                value[index] = original
                if not (_same_switches(base, plus_switches) and _same_switches(base, minus_switches)):
                    continue
                numeric = (plus - minus) / (2 * h)
                assert abs(grads[name][index] - numeric) <= tolerance * max(1.0, abs(numeric)), name
                found += 1
            compared += found
        return compared

    return check
