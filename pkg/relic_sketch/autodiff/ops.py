"""
Relic Sketch - Differentiable Operators
Convolutions, pooling, pointwise maps and the shape plumbing both networks need.
All operators take Tensors in NCHW layout and record themselves on the inputs' graph.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from relic_sketch.autodiff.tensor import Tensor, as_tensor, record
from relic_sketch.errors import DimensionError, ParameterError

logger = logging.getLogger(__name__)

_SIGMOID_LOW = np.finfo(np.float64).tiny
_SIGMOID_HIGH = np.nextafter(1.0, 0.0)


def _require_4d(name: str, tensor: Tensor):
    if tensor.data.ndim != 4:
        raise DimensionError(f"{name} must be 4-D (N, C, H, W), got shape {list(tensor.shape)}")


def _window(start: int, stride: int, count: int) -> slice:
    return slice(start, start + stride * (count - 1) + 1, stride)


def conv2d(input: Tensor, kernel: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, dilation: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of input [N,C,H,W] with kernel [F,C,kh,kw] plus bias [F]"""
    input, kernel = as_tensor(input), as_tensor(kernel)
    _require_4d("input", input)
    _require_4d("kernel", kernel)
    if stride < 1 or dilation < 1:
        raise ParameterError(f"stride and dilation must be positive, got stride={stride} dilation={dilation}")
    if padding < 0:
        raise ParameterError(f"padding must be non-negative, got {padding}")

    x, k = input.data, kernel.data
    n, c, h, w = x.shape
    f, kc, kh, kw = k.shape
    if kc != c:
        raise DimensionError(f"kernel expects {kc} input channels, input has {c}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (f,):
            raise DimensionError(f"bias must have shape [{f}], got {list(bias.shape)}")

    span_h = dilation * (kh - 1) + 1
    span_w = dilation * (kw - 1) + 1
    padded_h, padded_w = h + 2 * padding, w + 2 * padding
    if span_h > padded_h or span_w > padded_w:
        raise DimensionError(
            f"dilated kernel {span_h}x{span_w} does not fit padded input {padded_h}x{padded_w}")
    out_h = (padded_h - span_h) // stride + 1
    out_w = (padded_w - span_w) // stride + 1

    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    cols = np.empty((n, c, kh, kw, out_h, out_w))
    for i in range(kh):
        rows = _window(i * dilation, stride, out_h)
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, rows, _window(j * dilation, stride, out_w)]

    out = np.tensordot(k, cols, axes=([1, 2, 3], [1, 2, 3])).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def vjp(grad):
        d_kernel = np.tensordot(grad, cols, axes=([0, 2, 3], [0, 4, 5]))
        d_cols = np.tensordot(k, grad, axes=([0], [1])).transpose(3, 0, 1, 2, 4, 5)
        d_xp = np.zeros_like(xp)
        for i in range(kh):
            rows = _window(i * dilation, stride, out_h)
            for j in range(kw):
                d_xp[:, :, rows, _window(j * dilation, stride, out_w)] += d_cols[:, :, i, j]
        d_input = d_xp[:, :, padding:padding + h, padding:padding + w] if padding else d_xp
        d_bias = grad.sum(axis=(0, 2, 3)) if bias is not None else None
        return d_input, d_kernel, d_bias

    inputs = [input, kernel] + ([bias] if bias is not None else [])
    return record("conv2d", inputs, out, vjp)


def transposed_conv2d(input: Tensor, kernel: Tensor, bias: Optional[Tensor] = None,
                      stride: int = 1) -> Tensor:
    """
    Scatter-accumulate upsampling, the adjoint of an unpadded conv2d with the same
    kernel: input [N,F,H,W], kernel [F,C,kh,kw] -> [N,C,(H-1)*stride+kh,(W-1)*stride+kw]
    """
    input, kernel = as_tensor(input), as_tensor(kernel)
    _require_4d("input", input)
    _require_4d("kernel", kernel)
    if stride < 1:
        raise ParameterError(f"stride must be positive, got {stride}")

    x, k = input.data, kernel.data
    n, f, h, w = x.shape
    kf, c, kh, kw = k.shape
    if kf != f:
        raise DimensionError(f"kernel expects {kf} input channels, input has {f}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c,):
            raise DimensionError(f"bias must have shape [{c}], got {list(bias.shape)}")

    out_h = (h - 1) * stride + kh
    out_w = (w - 1) * stride + kw
    contrib = np.tensordot(x, k, axes=([1], [0]))  # N, H, W, C, kh, kw
    out = np.zeros((n, c, out_h, out_w))
    for a in range(kh):
        rows = _window(a, stride, h)
        for b in range(kw):
            out[:, :, rows, _window(b, stride, w)] += contrib[:, :, :, :, a, b].transpose(0, 3, 1, 2)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def vjp(grad):
        cols = np.empty((n, c, kh, kw, h, w))
        for a in range(kh):
            rows = _window(a, stride, h)
            for b in range(kw):
                cols[:, :, a, b] = grad[:, :, rows, _window(b, stride, w)]
        d_input = np.tensordot(k, cols, axes=([1, 2, 3], [1, 2, 3])).transpose(1, 0, 2, 3)
        d_kernel = np.tensordot(x, cols, axes=([0, 2, 3], [0, 4, 5]))
        d_bias = grad.sum(axis=(0, 2, 3)) if bias is not None else None
        return d_input, d_kernel, d_bias

    inputs = [input, kernel] + ([bias] if bias is not None else [])
    return record("transposed_conv2d", inputs, out, vjp)


def max_pool2d(input: Tensor, window: int, stride: int) -> Tensor:
    """Windowed maximum; the gradient goes to the first row-major maximum of each window"""
    input = as_tensor(input)
    _require_4d("input", input)
    if window < 1 or stride < 1:
        raise ParameterError(f"window and stride must be positive, got {window}/{stride}")
    x = input.data
    n, c, h, w = x.shape
    if window > h or window > w:
        raise DimensionError(f"pool window {window} larger than input {h}x{w}")

    out_h = (h - window) // stride + 1
    out_w = (w - window) // stride + 1
    stacked = np.empty((n, c, out_h, out_w, window * window))
    for i in range(window):
        rows = _window(i, stride, out_h)
        for j in range(window):
            stacked[..., i * window + j] = x[:, :, rows, _window(j, stride, out_w)]
    winner = stacked.argmax(axis=-1)
    out = np.take_along_axis(stacked, winner[..., None], axis=-1)[..., 0]

    def vjp(grad):
        d_input = np.zeros_like(x)
        for i in range(window):
            rows = _window(i, stride, out_h)
            for j in range(window):
                d_input[:, :, rows, _window(j, stride, out_w)] += grad * (winner == i * window + j)
        return (d_input,)

    return record("max_pool2d", [input], out, vjp)


def pointwise(input: Tensor, fn: str) -> Tensor:
    input = as_tensor(input)
    x = input.data
    if fn == "relu":
        out = np.maximum(x, 0.0)
        active = x > 0

        def vjp(grad):
            return (grad * active,)
    elif fn == "sigmoid":
        raw = expit(x)
        out = np.clip(raw, _SIGMOID_LOW, _SIGMOID_HIGH)
        slope = raw * (1.0 - raw)

        def vjp(grad):
            return (grad * slope,)
    else:
        raise ParameterError(f"Unknown pointwise function '{fn}'")
    return record(fn, [input], out, vjp)


def relu(input: Tensor) -> Tensor:
    return pointwise(input, "relu")


def sigmoid(input: Tensor) -> Tensor:
    return pointwise(input, "sigmoid")


def add(*tensors: Tensor) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ParameterError("add() needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise DimensionError(f"add() shape mismatch {list(shape)} vs {list(t.shape)}")
    out = tensors[0].data.copy()
    for t in tensors[1:]:
        out += t.data

    def vjp(grad):
        return tuple(grad for _ in tensors)

    return record("add", tensors, out, vjp)


def scale(input: Tensor, factor: float) -> Tensor:
    input = as_tensor(input)
    factor = float(factor)

    def vjp(grad):
        return (grad * factor,)

    return record("scale", [input], input.data * factor, vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul() shape mismatch {list(a.shape)} vs {list(b.shape)}")

    def vjp(grad):
        return grad * b.data, grad * a.data

    return record("mul", [a, b], a.data * b.data, vjp)


def sum_all(input: Tensor) -> Tensor:
    input = as_tensor(input)
    shape = input.shape

    def vjp(grad):
        return (np.broadcast_to(grad, shape).copy(),)

    return record("sum", [input], np.array(input.data.sum()), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ParameterError("concat() needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat() shape mismatch: {e}") from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(grad):
        return tuple(np.split(grad, bounds, axis=axis))

    return record("concat", tensors, out, vjp)


def crop(input: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    input = as_tensor(input)
    _require_4d("input", input)
    h, w = input.shape[2:]
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise DimensionError(f"crop {height}x{width} at ({top},{left}) exceeds {h}x{w}")
    out = input.data[:, :, top:top + height, left:left + width]

    def vjp(grad):
        d_input = np.zeros(input.shape)
        d_input[:, :, top:top + height, left:left + width] = grad
        return (d_input,)

    return record("crop", [input], out, vjp)


def bilinear_matrix(source: int, target: int) -> np.ndarray:
    """Half-pixel-centred linear interpolation weights, shape [target, source]"""
    matrix = np.zeros((target, source))
    positions = (np.arange(target) + 0.5) * (source / target) - 0.5
    positions = np.clip(positions, 0.0, source - 1)
    lower = np.floor(positions).astype(int)
    upper = np.minimum(lower + 1, source - 1)
    frac = positions - lower
    rows = np.arange(target)
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, upper), frac)
    return matrix


def resize_bilinear(input: Tensor, height: int, width: int) -> Tensor:
    """Fixed (non-learned) bilinear resampling to height x width"""
    input = as_tensor(input)
    _require_4d("input", input)
    h, w = input.shape[2:]
    rows = bilinear_matrix(h, height)
    cols = bilinear_matrix(w, width)
    out = rows @ input.data @ cols.T

    def vjp(grad):
        return (rows.T @ grad @ cols,)

    return record("resize_bilinear", [input], out, vjp)


def weighted_cross_entropy(pred: Tensor, positive_weight: np.ndarray, negative_weight: np.ndarray,
                           eps: float = 1e-7) -> Tensor:
    """
    -sum(neg_w * log(1 - p)) - sum(pos_w * log(p)) with p clipped to [eps, 1 - eps].
    The weights are constants; clipped pixels pass no gradient.
    """
    pred = as_tensor(pred)
    if positive_weight.shape != pred.shape or negative_weight.shape != pred.shape:
        raise DimensionError(
            f"weight maps {list(positive_weight.shape)} do not match prediction {list(pred.shape)}")
    p = np.clip(pred.data, eps, 1.0 - eps)
    value = -(negative_weight * np.log1p(-p)).sum() - (positive_weight * np.log(p)).sum()
    inside = (pred.data > eps) & (pred.data < 1.0 - eps)

    def vjp(grad):
        slope = (negative_weight / (1.0 - p) - positive_weight / p) * inside
        return (slope * grad,)

    return record("weighted_cross_entropy", [pred], np.array(value), vjp)
