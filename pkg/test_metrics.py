#!/usr/bin/env python3
"""
RMSE, SSIM, tolerance matching, average precision and recall tests
"""

import itertools
import math

import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from relic_sketch.errors import ContractError, DimensionError
from relic_sketch.evaluation.metrics import (average_precision, default_tolerance, evaluate_pair, pr_match,
                                             precision_recall_curve, recall, rmse, ssim, summarize)


def test_rmse():
    assert rmse(np.array([[0.0, 1.0]]), np.array([[1.0, 1.0]])) == pytest.approx(math.sqrt(0.5))
    x = np.random.default_rng(0).random((4, 4))
    assert rmse(x, x) == 0.0
    with pytest.raises(DimensionError):
        rmse(np.zeros((2, 2)), np.zeros((2, 3)))


def test_ssim_identity_and_symmetry():
    rng = np.random.default_rng(1)
    a, b = rng.random((24, 24)), rng.random((24, 24))
    assert abs(ssim(a, a) - 1.0) <= 1e-9
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1.0 <= ssim(a, b) <= 1.0


def test_ssim_constant_images_closed_form():
    c1 = 0.01 ** 2
    expected = (2 * 0.2 * 0.4 + c1) / (0.2 ** 2 + 0.4 ** 2 + c1)
    assert abs(ssim(np.full((16, 16), 0.2), np.full((16, 16), 0.4)) - expected) <= 1e-6


def test_ssim_needs_full_window():
    with pytest.raises(DimensionError):
        ssim(np.zeros((10, 20)), np.zeros((10, 20)))


def test_pr_match_identical_maps():
    gt = (np.random.default_rng(2).random((12, 12)) > 0.8).astype(float)
    tp, fp, fn = pr_match(gt, gt, 0.0)
    assert (fp, fn) == (0, 0) and tp == int(gt.sum())


def test_pr_match_distance_threshold():
    pred = np.zeros((5, 5))
    gt = np.zeros((5, 5))
    pred[0, 0] = 1.0
    gt[0, 3] = 1.0
    assert pr_match(pred, gt, 2.0) == (0, 1, 1)
    assert pr_match(pred, gt, 4.0) == (1, 0, 0)
    assert pr_match(pred, gt, 3.0) == (1, 0, 0)


def test_pr_match_nearest_pairs_first_with_row_major_ties():
    pred = np.zeros((3, 5))
    gt = np.zeros((3, 5))
    pred[1, 2] = 1.0
    gt[1, 1] = gt[1, 3] = 1.0
    # both gt pixels are at distance 1; the row-major earlier one wins
    assert pr_match(pred, gt, 1.0) == (1, 0, 1)
    pred[1, 0] = 1.0
    # (1,0) reaches only (1,1) and claims it first in row-major order
    assert pr_match(pred, gt, 1.0) == (2, 0, 0)


def test_pr_match_requires_binary_maps():
    with pytest.raises(ContractError):
        pr_match(np.full((2, 2), 0.5), np.zeros((2, 2)), 1.0)


def _optimal_matches(pred, gt, d_max):
    """Exhaustive maximum matching for tiny instances"""
    p = np.argwhere(pred == 1.0)
    g = np.argwhere(gt == 1.0)
    for size in range(min(len(p), len(g)), 0, -1):
        for chosen in itertools.combinations(range(len(p)), size):
            for partners in itertools.permutations(range(len(g)), size):
                if all(np.hypot(*(p[i] - g[j])) <= d_max for i, j in zip(chosen, partners)):
                    return size
    return 0


def test_pr_match_against_exhaustive_oracle_on_small_instances():
    rng = np.random.default_rng(3)
    for _ in range(20):
        pred = np.zeros((6, 6))
        gt = np.zeros((6, 6))
        pred.flat[rng.choice(36, size=5, replace=False)] = 1.0
        gt.flat[rng.choice(36, size=5, replace=False)] = 1.0
        tp, fp, fn = pr_match(pred, gt, 1.5)
        optimal = _optimal_matches(pred, gt, 1.5)
        assert tp <= optimal and 2 * tp >= optimal
        assert tp + fp == 5 and tp + fn == 5


def test_pr_match_close_to_maximum_matching_on_sparse_maps():
    rng = np.random.default_rng(4)
    greedy_total = optimal_total = 0
    for _ in range(30):
        pred = (rng.random((32, 32)) > 0.97).astype(float)
        gt = (rng.random((32, 32)) > 0.97).astype(float)
        p, g = np.argwhere(pred == 1.0), np.argwhere(gt == 1.0)
        distances = np.hypot(p[:, None, 0] - g[None, :, 0], p[:, None, 1] - g[None, :, 1])
        matching = maximum_bipartite_matching(csr_matrix((distances <= 1.0).astype(int)), perm_type="column")
        optimal = int((matching >= 0).sum())
        tp, _, _ = pr_match(pred, gt, 1.0)
        assert tp <= optimal
        greedy_total += tp
        optimal_total += optimal
    assert greedy_total >= 0.95 * optimal_total


def test_default_tolerance_is_fraction_of_diagonal():
    assert default_tolerance((300, 400)) == pytest.approx(3.75)


def test_average_precision_of_perfect_prediction():
    gt = (np.random.default_rng(5).random((16, 16)) > 0.9).astype(float)
    assert average_precision(gt, gt, d_max=0.0) == 1.0


def test_uniform_prediction_ap_equals_density():
    gt = np.zeros((10, 10))
    gt[2, 3:8] = 1.0
    assert average_precision(np.full((10, 10), 0.5), gt, d_max=0.0) == pytest.approx(0.05)


def test_average_precision_invariant_to_monotone_transform():
    rng = np.random.default_rng(6)
    gt = (rng.random((12, 12)) > 0.8).astype(float)
    levels = np.array([0.05, 0.35, 0.75])
    pred = levels[rng.integers(0, 3, size=(12, 12))]
    pred[gt == 1.0] = np.maximum(pred[gt == 1.0], 0.35)
    assert average_precision(np.sqrt(pred), gt, 0.0) == pytest.approx(average_precision(pred, gt, 0.0))


def test_isolated_false_positives_never_help():
    gt = np.zeros((12, 12))
    gt[3, 2:9] = 1.0
    pred = np.where(gt > 0, 0.8, 0.1)
    pred[3, 2] = 0.3
    noisy = pred.copy()
    noisy[10, 10] = 0.9
    assert average_precision(noisy, gt, 1.0) <= average_precision(pred, gt, 1.0)
    assert recall(noisy, gt, 0.5, 1.0) == recall(pred, gt, 0.5, 1.0)


def test_precision_recall_curve_skips_empty_thresholds():
    gt = np.zeros((4, 4))
    gt[0, 0] = 1.0
    pred = np.zeros((4, 4))
    pred[0, 0] = 0.5
    points = precision_recall_curve(pred, gt, 0.0)
    assert len(points) == 50
    assert all(p == 1.0 and r == 1.0 for _, p, r in points)


def test_empty_ground_truth_conventions():
    gt = np.zeros((5, 5))
    assert average_precision(np.zeros((5, 5)), gt) == 1.0
    assert average_precision(np.full((5, 5), 0.5), gt) == 0.0
    assert recall(np.full((5, 5), 0.5), gt) == 1.0


def test_recall_extremes():
    gt = np.zeros((8, 8))
    gt[4, :] = 1.0
    assert recall(gt, gt) == 1.0
    assert recall(np.zeros((8, 8)), gt) == 0.0
    with pytest.raises(ContractError):
        recall(gt, np.full((8, 8), 0.3))


def test_evaluate_pair_and_summary():
    rng = np.random.default_rng(7)
    gt = (rng.random((16, 16)) > 0.85).astype(float)
    rows = [evaluate_pair(gt, gt), evaluate_pair(np.clip(gt + 0.2 * rng.random((16, 16)), 0, 1), gt)]
    report = summarize(rows)
    assert report.per_image == rows
    assert report.rmse == pytest.approx((rows[0]["rmse"] + rows[1]["rmse"]) / 2)
    assert set(report.to_dict()) == {"rmse", "ssim", "ap", "recall", "per_image"}
    with pytest.raises(ContractError):
        summarize([])
