"""
Relic Sketch - Evaluation Metrics
RMSE, SSIM, tolerance-matched precision/recall and average precision
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree
from skimage.metrics import structural_similarity

from relic_sketch.errors import ContractError, DimensionError, ParameterError
from relic_sketch.parsers.image_parser import GrayImage, pixels_of

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
TOLERANCE_FRACTION = 0.0075
AP_THRESHOLDS = np.round(np.arange(1, 100) / 100.0, 2)


@dataclass
class MetricReport:
    rmse: float
    ssim: float
    ap: float
    recall: float
    per_image: List[Dict] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return asdict(self)


def _pair(a: GrayImage, b: GrayImage) -> Tuple[np.ndarray, np.ndarray]:
    pa, pb = pixels_of(a), pixels_of(b)
    if pa.shape != pb.shape:
        raise DimensionError(f"images differ in size: {pa.shape} vs {pb.shape}")
    return pa, pb


def default_tolerance(shape) -> float:
    """Matching distance in pixels: 0.0075 of the image diagonal"""
    return TOLERANCE_FRACTION * float(np.hypot(shape[0], shape[1]))


def rmse(a: GrayImage, b: GrayImage) -> float:
    pa, pb = _pair(a, b)
    return float(np.sqrt(np.mean((pa - pb) ** 2)))


def ssim(a: GrayImage, b: GrayImage) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), dynamic range 1"""
    pa, pb = _pair(a, b)
    if pa.shape[0] < SSIM_WINDOW or pa.shape[1] < SSIM_WINDOW:
        raise DimensionError(f"ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {pa.shape}")
    value = structural_similarity(
        pa, pb,
        win_size=SSIM_WINDOW,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        K1=SSIM_K1,
        K2=SSIM_K2,
        data_range=1.0,
    )
    return float(value)


def _require_binary(name: str, values: np.ndarray):
    if not np.all((values == 0.0) | (values == 1.0)):
        raise ContractError(f"{name} must be binary (0/1)")


def pr_match(pred_binary: GrayImage, gt_binary: GrayImage, d_max: float) -> Tuple[int, int, int]:
    """
    Greedy one-to-one matching of predicted to ground-truth line pixels within
    d_max, nearest pairs first; ties go to the row-major earlier pixels.
    Returns (tp, fp, fn).
    """
    pred, gt = _pair(pred_binary, gt_binary)
    _require_binary("prediction", pred)
    _require_binary("ground truth", gt)
    if d_max < 0:
        raise ParameterError(f"d_max must be non-negative, got {d_max}")

    pred_points = np.argwhere(pred == 1.0)
    gt_points = np.argwhere(gt == 1.0)
    if len(pred_points) == 0 or len(gt_points) == 0:
        return 0, len(pred_points), len(gt_points)

    neighbours = cKDTree(pred_points).query_ball_tree(cKDTree(gt_points), d_max + 1e-9)
    pred_idx = np.array([i for i, found in enumerate(neighbours) for _ in found], dtype=np.intp)
    gt_idx = np.array([j for found in neighbours for j in found], dtype=np.intp)
    if len(pred_idx) == 0:
        return 0, len(pred_points), len(gt_points)
    distances = np.hypot(*(pred_points[pred_idx] - gt_points[gt_idx]).T)
    keep = distances <= d_max + 1e-12
    pred_idx, gt_idx, distances = pred_idx[keep], gt_idx[keep], distances[keep]
    # argwhere is row-major, so point indices already encode the tie-break order
    order = np.lexsort((gt_idx, pred_idx, distances))

    used_pred = np.zeros(len(pred_points), dtype=bool)
    used_gt = np.zeros(len(gt_points), dtype=bool)
    tp = 0
    for index in order:
        i, j = pred_idx[index], gt_idx[index]
        if used_pred[i] or used_gt[j]:
            continue
        used_pred[i] = used_gt[j] = True
        tp += 1
    return tp, len(pred_points) - tp, len(gt_points) - tp


def _resolve_tolerance(shape, d_max: Optional[float]) -> float:
    return default_tolerance(shape) if d_max is None else d_max


def precision_recall_curve(pred: GrayImage, gt_binary: GrayImage,
                           d_max: Optional[float] = None) -> List[Tuple[float, float, float]]:
    """(threshold, precision, recall) for each grid threshold that yields predictions"""
    pp, gt = _pair(pred, gt_binary)
    _require_binary("ground truth", gt)
    tolerance = _resolve_tolerance(gt.shape, d_max)
    points = []
    for threshold in AP_THRESHOLDS:
        binary = (pp >= threshold).astype(np.float64)
        if not binary.any():
            continue
        tp, fp, fn = pr_match(binary, gt, tolerance)
        precision = tp / (tp + fp)
        recall_value = tp / (tp + fn) if tp + fn else 1.0
        points.append((float(threshold), precision, recall_value))
    return points


def average_precision(pred: GrayImage, gt_binary: GrayImage, d_max: Optional[float] = None) -> float:
    """Area under the PR curve with precision made non-increasing in recall"""
    pp, gt = _pair(pred, gt_binary)
    _require_binary("ground truth", gt)
    if not gt.any():
        logger.warning("⚠️ Ground truth has no line pixels; AP is 1 only for an empty prediction")
        return 1.0 if pp.max() < AP_THRESHOLDS[0] else 0.0

    points = precision_recall_curve(pp, gt, d_max)
    if not points:
        return 0.0
    recalls = np.array([p[2] for p in points])
    precisions = np.array([p[1] for p in points])
    order = np.argsort(recalls, kind="stable")
    recalls, precisions = recalls[order], precisions[order]
    # best precision achievable at this recall or beyond
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recalls]))
    return float(np.clip(np.sum(steps * envelope), 0.0, 1.0))


def recall(pred: GrayImage, gt_binary: GrayImage, threshold: float = 0.5, d_max: Optional[float] = None) -> float:
    pp, gt = _pair(pred, gt_binary)
    _require_binary("ground truth", gt)
    if not gt.any():
        logger.warning("⚠️ Ground truth has no line pixels; recall defined as 1")
        return 1.0
    binary = (pp >= threshold).astype(np.float64)
    tp, _, fn = pr_match(binary, gt, _resolve_tolerance(gt.shape, d_max))
    return tp / (tp + fn)


def evaluate_pair(pred: GrayImage, gt_binary: GrayImage, d_max: Optional[float] = None,
                  threshold: float = 0.5) -> Dict[str, float]:
    return {
        "rmse": rmse(pred, gt_binary),
        "ssim": ssim(pred, gt_binary),
        "ap": average_precision(pred, gt_binary, d_max),
        "recall": recall(pred, gt_binary, threshold, d_max),
    }


def summarize(rows: List[Dict]) -> MetricReport:
    """Average per-image metric rows (each carrying rmse/ssim/ap/recall) into a report"""
    if not rows:
        raise ContractError("cannot summarize an empty evaluation")
    means = {key: float(np.mean([row[key] for row in rows])) for key in ("rmse", "ssim", "ap", "recall")}
    return MetricReport(per_image=list(rows), **means)
