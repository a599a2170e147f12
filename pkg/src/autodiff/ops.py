"""
Differentiable tensor operations.

Binary elementwise ops accept equal shapes or a 0-d scalar operand; there is
no other implicit broadcasting. Layers that need a per-channel or per-feature
bias (linear, conv2d, layer_norm) take it as an explicit argument.
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, ndtr

from src.autodiff.tensor import Tensor
from src.exceptions import DimensionError, NumericError, ParameterError

logger = logging.getLogger(__name__)

Operand = Union[Tensor, float, int, np.ndarray]

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def as_tensor(value: Operand) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


def _binary(a: Operand, b: Operand, name: str) -> tuple[Tensor, Tensor]:
    ta, tb = as_tensor(a), as_tensor(b)
    if ta.shape != tb.shape and ta.ndim != 0 and tb.ndim != 0:
        raise DimensionError(f"{name}: shape mismatch {ta.shape} vs {tb.shape}")
    return ta, tb


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a: Operand, b: Operand) -> Tensor:
    ta, tb = _binary(a, b, "add")

    def backward(g):
        return _reduce_to(g, ta.shape), _reduce_to(g, tb.shape)

    return Tensor.from_op(ta.data + tb.data, (ta, tb), backward, "add")


def sub(a: Operand, b: Operand) -> Tensor:
    ta, tb = _binary(a, b, "sub")

    def backward(g):
        return _reduce_to(g, ta.shape), _reduce_to(-g, tb.shape)

    return Tensor.from_op(ta.data - tb.data, (ta, tb), backward, "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    ta, tb = _binary(a, b, "mul")

    def backward(g):
        return _reduce_to(g * tb.data, ta.shape), _reduce_to(g * ta.data, tb.shape)

    return Tensor.from_op(ta.data * tb.data, (ta, tb), backward, "mul")


def neg(x: Operand) -> Tensor:
    tx = as_tensor(x)
    return Tensor.from_op(-tx.data, (tx,), lambda g: (-g,), "neg")


def relu(x: Operand) -> Tensor:
    tx = as_tensor(x)
    mask = tx.data > 0
    # relu'(0) is taken as 0
    return Tensor.from_op(
        np.where(mask, tx.data, 0.0), (tx,), lambda g: (g * mask,), "relu"
    )


def sigmoid(x: Operand) -> Tensor:
    tx = as_tensor(x)
    s = expit(tx.data)
    return Tensor.from_op(s, (tx,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def gelu(x: Operand) -> Tensor:
    """Exact GELU x * Phi(x), not the tanh approximation"""
    tx = as_tensor(x)
    cdf = ndtr(tx.data)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * tx.data**2)
    return Tensor.from_op(
        tx.data * cdf, (tx,), lambda g: (g * (cdf + tx.data * pdf),), "gelu"
    )


def exp(x: Operand) -> Tensor:
    tx = as_tensor(x)
    out = np.exp(tx.data)
    return Tensor.from_op(out, (tx,), lambda g: (g * out,), "exp")


def log(x: Operand) -> Tensor:
    tx = as_tensor(x)
    if np.any(tx.data <= 0):
        raise NumericError("log of a non-positive value")
    return Tensor.from_op(np.log(tx.data), (tx,), lambda g: (g / tx.data,), "log")


def clip(x: Operand, low: float, high: float) -> Tensor:
    tx = as_tensor(x)
    inside = (tx.data >= low) & (tx.data <= high)
    return Tensor.from_op(
        np.clip(tx.data, low, high), (tx,), lambda g: (g * inside,), "clip"
    )


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "relu": relu,
    "sigmoid": sigmoid,
    "gelu": gelu,
}


def elementwise(op: str, *operands: Operand) -> Tensor:
    """Dispatch one of add, sub, mul, relu, sigmoid, gelu by name"""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ParameterError(f"Unknown elementwise op {op!r}") from None
    return fn(*operands)


# ---------------------------------------------------------------------------
# Reductions and shape manipulation
# ---------------------------------------------------------------------------


def sum(x: Operand, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    tx = as_tensor(x)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, tx.shape),)

    return Tensor.from_op(
        np.sum(tx.data, axis=axis, keepdims=keepdims), (tx,), backward, "sum"
    )


def mean(x: Operand, axis=None, keepdims: bool = False) -> Tensor:
    tx = as_tensor(x)
    if axis is None:
        count = tx.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([tx.shape[a] for a in axes]))
    return mul(sum(tx, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Operand, shape: Sequence[int]) -> Tensor:
    tx = as_tensor(x)
    out = tx.data.reshape(tuple(shape))
    return Tensor.from_op(out, (tx,), lambda g: (g.reshape(tx.shape),), "reshape")


def transpose(x: Operand, axes: Sequence[int]) -> Tensor:
    tx = as_tensor(x)
    inverse = np.argsort(axes)
    return Tensor.from_op(
        tx.data.transpose(axes), (tx,), lambda g: (g.transpose(inverse),), "transpose"
    )


def take(x: Operand, index) -> Tensor:
    """Basic or advanced indexing; repeated indices accumulate gradients"""
    tx = as_tensor(x)

    def backward(g):
        full = np.zeros_like(tx.data)
        np.add.at(full, index, g)
        return (full,)

    return Tensor.from_op(tx.data[index], (tx,), backward, "take")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return Tensor.from_op(
        np.concatenate([p.data for p in parts], axis=axis), parts, backward, "concat"
    )


def expand(x: Operand, n: int) -> Tensor:
    """Repeat x along a new leading axis of length n"""
    tx = as_tensor(x)
    out = np.broadcast_to(tx.data, (n,) + tx.shape).copy()
    return Tensor.from_op(out, (tx,), lambda g: (g.sum(axis=0),), "expand")


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Operand, b: Operand) -> Tensor:
    """(..., m, k) @ (k, n) or batched (..., m, k) @ (..., k, n)"""
    ta, tb = as_tensor(a), as_tensor(b)
    if ta.ndim < 2 or tb.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2, got {ta.shape} and {tb.shape}")
    if ta.shape[-1] != tb.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {ta.shape} @ {tb.shape}")

    if tb.ndim == 2:
        k, n = tb.shape

        def backward(g):
            ga = g @ tb.data.T
            gb = ta.data.reshape(-1, k).T @ g.reshape(-1, n)
            return ga, gb

    elif ta.shape[:-2] == tb.shape[:-2]:

        def backward(g):
            ga = g @ np.swapaxes(tb.data, -1, -2)
            gb = np.swapaxes(ta.data, -1, -2) @ g
            return ga, gb

    else:
        raise DimensionError(f"matmul batch extents differ: {ta.shape} @ {tb.shape}")

    return Tensor.from_op(ta.data @ tb.data, (ta, tb), backward, "matmul")


def linear(x: Operand, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight + bias over the last axis; weight has shape (in, out)"""
    tx = as_tensor(x)
    if tx.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"linear: input features {tx.shape[-1]} != weight rows {weight.shape[0]}"
        )
    k, n = weight.shape
    out = tx.data @ weight.data
    parents: list[Tensor] = [tx, weight]
    if bias is not None:
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        g2 = g.reshape(-1, n)
        grads = [g @ weight.data.T, tx.data.reshape(-1, k).T @ g2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return Tensor.from_op(out, parents, backward, "linear")


# ---------------------------------------------------------------------------
# Convolution and resampling
# ---------------------------------------------------------------------------


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv2d(
    x: Operand,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    pad: int = 0,
) -> Tensor:
    """Cross-correlation of (C, H, W) or (N, C, H, W) input with (Co, C, k, k)"""
    tx = as_tensor(x)
    if tx.ndim == 3:
        batched = conv2d(reshape(tx, (1,) + tx.shape), weight, bias, stride, pad)
        return reshape(batched, batched.shape[1:])
    if tx.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d: bad ranks {tx.shape} * {weight.shape}")
    if stride not in (1, 2):
        raise ParameterError(f"conv2d: stride must be 1 or 2, got {stride}")

    n, c, h, w = tx.shape
    co, ci, kh, kw = weight.shape
    if ci != c:
        raise DimensionError(f"conv2d: input channels {c} != kernel channels {ci}")
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d: empty output for input {h}x{w}, pad {pad}")

    xp = np.pad(tx.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[
        :, :, ::stride, ::stride
    ][:, :, :ho, :wo]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2)
    parents: list[Tensor] = [tx, weight]
    if bias is not None:
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def backward(g):
        gw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        dwin = np.tensordot(g, weight.data, axes=([1], [0]))
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[
                    :, :, i : i + stride * ho : stride, j : j + stride * wo : stride
                ] += dwin[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grads = [gxp[:, :, pad : pad + h, pad : pad + w], gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return Tensor.from_op(out, parents, backward, "conv2d")


def interpolation_matrix(size: int) -> np.ndarray:
    """Linear 2x upsampling operator (2*size, size), half-pixel centres, edge clamp"""
    u = np.zeros((2 * size, size))
    for o in range(2 * size):
        src = max((o + 0.5) / 2.0 - 0.5, 0.0)
        i0 = min(int(np.floor(src)), size - 1)
        i1 = min(i0 + 1, size - 1)
        frac = src - i0
        u[o, i0] += 1.0 - frac
        u[o, i1] += frac
    return u


def upsample2x(x: Operand, mode: str = "bilinear") -> Tensor:
    """Fixed 2x upsampling over the last two axes"""
    tx = as_tensor(x)
    h, w = tx.shape[-2:]
    if mode == "nearest":
        out = tx.data.repeat(2, axis=-2).repeat(2, axis=-1)

        def backward(g):
            blocks = g.reshape(g.shape[:-2] + (h, 2, w, 2))
            return (blocks.sum(axis=(-3, -1)),)

    elif mode == "bilinear":
        uh, uw = interpolation_matrix(h), interpolation_matrix(w)
        out = uh @ tx.data @ uw.T

        def backward(g):
            return (uh.T @ g @ uw,)

    else:
        raise ParameterError(f"Unknown upsample mode {mode!r}")
    return Tensor.from_op(out, (tx,), backward, f"upsample_{mode}")


# ---------------------------------------------------------------------------
# Normalization, attention helpers, regularization
# ---------------------------------------------------------------------------


def softmax(x: Operand, axis: int = -1) -> Tensor:
    tx = as_tensor(x)
    if not np.all(np.isfinite(tx.data)):
        raise NumericError("softmax received non-finite input")
    shifted = tx.data - tx.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(s, (tx,), backward, "softmax")


def log_softmax(x: Operand, axis: int = -1) -> Tensor:
    tx = as_tensor(x)
    if not np.all(np.isfinite(tx.data)):
        raise NumericError("log_softmax received non-finite input")
    shifted = tx.data - tx.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    s = np.exp(out)

    def backward(g):
        return (g - s * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (tx,), backward, "log_softmax")


def layer_norm(x: Operand, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by gain and shift by bias"""
    tx = as_tensor(x)
    d = tx.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: affine params must have shape ({d},)")
    mu = tx.data.mean(axis=-1, keepdims=True)
    var = tx.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (tx.data - mu) * inv_std
    out = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        gx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor.from_op(out, (tx, gain, bias), backward, "layer_norm")


def dropout(
    x: Operand, p: float, training: bool, rng: Optional[np.random.Generator]
) -> Tensor:
    """Inverted dropout: survivors are scaled by 1 / (1 - p)"""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    tx = as_tensor(x)
    if not training or p == 0.0:
        return tx
    if rng is None:
        raise ParameterError("dropout in training mode needs a random generator")
    mask = (rng.random(tx.shape) >= p) / (1.0 - p)
    return Tensor.from_op(tx.data * mask, (tx,), lambda g: (g * mask,), "dropout")


def l2_normalize(x: Operand, axis: int = -1, eps: float = 0.0) -> Tensor:
    """x / (||x|| + eps) along axis; zero vectors map to zero"""
    tx = as_tensor(x)
    norm = np.sqrt((tx.data**2).sum(axis=axis, keepdims=True))
    denom = norm + eps
    safe = np.where(denom > 0, denom, 1.0)
    out = tx.data / safe

    def backward(g):
        dot = (g * tx.data).sum(axis=axis, keepdims=True)
        scale = np.where(norm > 0, 1.0 / (np.where(norm > 0, norm, 1.0) * safe**2), 0.0)
        return (g / safe - tx.data * dot * scale,)

    return Tensor.from_op(out, (tx,), backward, "l2_normalize")


def row_distance(a: Operand, b: Operand) -> Tensor:
    """Euclidean distance between matching rows (last axis) of a and b"""
    ta, tb = _binary(a, b, "row_distance")
    diff = ta.data - tb.data
    dist = np.sqrt((diff**2).sum(axis=-1))
    safe = np.where(dist > 0, dist, 1.0)

    def backward(g):
        # subgradient 0 where the rows coincide
        ga = np.where(dist[..., None] > 0, g[..., None] * diff / safe[..., None], 0.0)
        return ga, -ga

    return Tensor.from_op(dist, (ta, tb), backward, "row_distance")
