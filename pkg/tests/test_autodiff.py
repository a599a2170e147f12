import math

import numpy as np
import pytest

from src.autodiff import Tape, Tensor, finite_diff_check, is_grad_enabled, no_grad
from src.autodiff import ops
from src.exceptions import ContractError, DimensionError, NumericError, ParameterError

GRAD_TOL = 1e-4
SEEDS = range(20)


def conv_reference(x, w, b, stride, pad):
    """Nested-loop cross-correlation of (C, H, W) input"""
    c, h, width = x.shape
    co = w.shape[0]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - 3) // stride + 1
    wo = (width + 2 * pad - 3) // stride + 1
    out = np.zeros((co, ho, wo))
    for o in range(co):
        for i in range(ho):
            for j in range(wo):
                total = b[o]
                for ci in range(c):
                    for di in range(3):
                        for dj in range(3):
                            total += w[o, ci, di, dj] * xp[ci, i * stride + di, j * stride + dj]
                out[o, i, j] = total
    return out


def bilinear_reference(img):
    """Per-pixel 2x bilinear upsampling with half-pixel centres and edge clamping"""
    h, w = img.shape

    def coords(o, n):
        src = max((o + 0.5) / 2.0 - 0.5, 0.0)
        i0 = min(int(math.floor(src)), n - 1)
        return i0, min(i0 + 1, n - 1), src - i0

    out = np.zeros((2 * h, 2 * w))
    for r in range(2 * h):
        r0, r1, fr = coords(r, h)
        for c in range(2 * w):
            c0, c1, fc = coords(c, w)
            top = (1 - fc) * img[r0, c0] + fc * img[r0, c1]
            bottom = (1 - fc) * img[r1, c0] + fc * img[r1, c1]
            out[r, c] = (1 - fr) * top + fr * bottom
    return out


# ---------------------------------------------------------------------------
# Forward values
# ---------------------------------------------------------------------------


@pytest.mark.unit
def test_matmul_identity_and_hand_sum():
    """Identity product and a hand-computed 2x2 @ 2x1 product"""
    a = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(ops.matmul(np.eye(3), a).data, a)
    out = ops.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
    assert np.array_equal(out.data, [[3.0], [7.0]])


@pytest.mark.unit
def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    expected = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    assert np.allclose(ops.matmul(a, b).data, expected, rtol=0, atol=1e-12)


@pytest.mark.unit
def test_matmul_rejects_bad_shapes():
    with pytest.raises(DimensionError):
        ops.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(DimensionError):
        ops.matmul(np.ones(3), np.ones((3, 1)))
    with pytest.raises(DimensionError):
        ops.matmul(np.ones((2, 2, 3)), np.ones((3, 3, 1)))


@pytest.mark.unit
def test_conv2d_counts_overlaps():
    """All-ones 3x3 input and kernel with pad 1: 9 in the centre, 4 in the corners"""
    out = ops.conv2d(np.ones((1, 3, 3)), Tensor(np.ones((1, 1, 3, 3))), Tensor([0.0]), 1, 1)
    assert out.shape == (1, 3, 3)
    assert out.data[0, 1, 1] == 9.0
    assert out.data[0, 0, 0] == 4.0
    assert out.data[0, 2, 2] == 4.0


@pytest.mark.unit
def test_conv2d_zero_kernel(rng):
    out = ops.conv2d(rng.normal(size=(2, 5, 5)), Tensor(np.zeros((3, 2, 3, 3))), None, 1, 1)
    assert np.array_equal(out.data, np.zeros((3, 5, 5)))


@pytest.mark.unit
@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_matches_nested_loops(rng, stride):
    x = rng.normal(size=(2, 8, 8))
    w = rng.normal(size=(4, 2, 3, 3))
    b = rng.normal(size=4)
    out = ops.conv2d(x, Tensor(w), Tensor(b), stride=stride, pad=1)
    if stride == 2:
        assert out.shape == (4, 4, 4)
    assert np.allclose(out.data, conv_reference(x, w, b, stride, 1), rtol=0, atol=1e-12)


@pytest.mark.unit
def test_conv2d_parameter_guards():
    with pytest.raises(ParameterError):
        ops.conv2d(np.ones((1, 4, 4)), Tensor(np.ones((1, 1, 3, 3))), stride=3, pad=1)
    with pytest.raises(DimensionError):
        ops.conv2d(np.ones((1, 1, 1)), Tensor(np.ones((1, 1, 3, 3))), stride=1, pad=0)
    with pytest.raises(DimensionError):
        ops.conv2d(np.ones((2, 4, 4)), Tensor(np.ones((1, 1, 3, 3))), stride=1, pad=1)


@pytest.mark.unit
def test_elementwise_values():
    assert np.array_equal(ops.elementwise("relu", Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
    assert ops.elementwise("sigmoid", Tensor(0.0)).item() == 0.5
    exact = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
    assert abs(ops.elementwise("gelu", Tensor(1.0)).item() - exact) < 1e-12
    assert abs(ops.gelu(Tensor(1.0)).item() - 0.841345) < 1e-6
    assert np.array_equal(ops.elementwise("add", Tensor([1.0, 2.0]), 3.0).data, [4.0, 5.0])


@pytest.mark.unit
def test_elementwise_guards():
    with pytest.raises(ParameterError):
        ops.elementwise("tanh", Tensor(1.0))
    with pytest.raises(DimensionError):
        ops.add(Tensor(np.ones(3)), Tensor(np.ones(2)))
    with pytest.raises(NumericError):
        ops.log(Tensor([1.0, 0.0]))


@pytest.mark.unit
def test_softmax_values():
    assert np.allclose(ops.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    assert np.allclose(ops.softmax(Tensor([1000.0, 0.0])).data, [1.0, 0.0], rtol=0, atol=1e-12)
    assert np.allclose(
        ops.softmax(Tensor([1.0, 2.0, 3.0])).data,
        [0.090031, 0.244728, 0.665241],
        rtol=0,
        atol=1e-6,
    )


@pytest.mark.unit
def test_softmax_rejects_non_finite():
    with pytest.raises(NumericError):
        ops.softmax(Tensor([np.inf, 0.0]))
    with pytest.raises(NumericError):
        ops.log_softmax(Tensor([np.nan, 0.0]))


@pytest.mark.unit
def test_layer_norm_values(rng):
    gain, bias = Tensor(np.ones(2)), Tensor(np.zeros(2))
    assert np.array_equal(ops.layer_norm(Tensor([[3.0, 3.0]]), gain, bias).data, [[0.0, 0.0]])
    out = ops.layer_norm(Tensor([1.0, -1.0]), gain, bias).data
    assert np.allclose(out, [1.0, -1.0], atol=1e-5)

    row = Tensor(rng.normal(size=(3, 4)))
    shift = Tensor(np.array([0.5, -1.0, 2.0, 0.0]))
    zeroed = ops.layer_norm(row, Tensor(np.zeros(4)), shift).data
    assert np.array_equal(zeroed, np.tile(shift.data, (3, 1)))


@pytest.mark.unit
def test_upsample_values():
    const = np.full((2, 3, 3), 0.7)
    for mode in ("nearest", "bilinear"):
        out = ops.upsample2x(Tensor(const), mode).data
        assert out.shape == (2, 6, 6)
        assert np.allclose(out, 0.7, rtol=0, atol=1e-15)
        single = ops.upsample2x(Tensor([[[2.5]]]), mode).data
        assert np.allclose(single, np.full((1, 2, 2), 2.5))

    ramp = np.array([[[0.0, 1.0], [2.0, 3.0]]])
    out = ops.upsample2x(Tensor(ramp), "bilinear").data
    assert np.allclose(out[0], bilinear_reference(ramp[0]), rtol=0, atol=1e-12)
    with pytest.raises(ParameterError):
        ops.upsample2x(Tensor(ramp), "bicubic")


@pytest.mark.unit
def test_dropout_statistics():
    x = Tensor(np.ones(100_000))
    assert ops.dropout(x, 0.0, True, np.random.default_rng(0)) is x
    assert ops.dropout(x, 0.9, False, None) is x

    out = ops.dropout(x, 0.5, True, np.random.default_rng(0)).data
    survivors = np.mean(out > 0)
    assert abs(survivors - 0.5) < 0.01
    assert abs(out.mean() - 1.0) < 0.01


@pytest.mark.unit
def test_dropout_guards():
    with pytest.raises(ParameterError):
        ops.dropout(Tensor(np.ones(3)), 1.0, True, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        ops.dropout(Tensor(np.ones(3)), 0.5, True, None)


@pytest.mark.unit
def test_l2_normalize_zero_vector():
    out = ops.l2_normalize(Tensor([[3.0, 4.0], [0.0, 0.0]]), axis=-1).data
    assert np.allclose(out, [[0.6, 0.8], [0.0, 0.0]])


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------


@pytest.mark.unit
def test_backward_of_sum_of_squares(rng):
    """loss = sum(x * x) gives grad 2x"""
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    ops.sum(ops.mul(x, x)).backward()
    assert np.allclose(x.grad, 2 * x.data)


@pytest.mark.unit
def test_backward_accumulates(rng):
    """Two backward calls without resetting double the gradient"""
    x = Tensor(rng.normal(size=4), requires_grad=True)
    loss = ops.sum(ops.mul(x, x))
    loss.backward()
    first = x.grad.copy()
    loss.backward()
    assert np.allclose(x.grad, 2 * first)


@pytest.mark.unit
def test_matmul_gradient_against_finite_differences(rng):
    b = Tensor(rng.normal(size=(4, 3)))
    a = Tensor(rng.normal(size=(2, 4)))
    assert finite_diff_check(lambda x: ops.sum(ops.matmul(x, b)), a) < 1e-6


@pytest.mark.unit
def test_finite_diff_check_linear_function(rng):
    x = Tensor(rng.normal(size=(3, 3)))
    assert finite_diff_check(lambda t: ops.sum(t), x) < 1e-10
    assert x.grad is None
    assert not x.requires_grad


@pytest.mark.unit
def test_backward_contract_errors(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    with pytest.raises(ContractError):
        ops.mul(x, 2.0).backward()
    with pytest.raises(ContractError):
        ops.sum(Tensor(np.ones(3))).backward()
    with pytest.raises(ContractError):
        Tensor(np.ones(2)).item()


@pytest.mark.unit
def test_no_grad_records_nothing(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    assert is_grad_enabled()
    with no_grad():
        assert not is_grad_enabled()
        y = ops.sum(ops.mul(x, x))
    assert is_grad_enabled()
    assert not y.requires_grad
    assert y.op == "sum"


@pytest.mark.unit
def test_tape_is_topologically_ordered(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    y = ops.relu(x)
    z = ops.sum(ops.add(y, y))
    tape = Tape.from_root(z)
    position = {id(node): i for i, node in enumerate(tape.nodes)}
    assert len(tape) == 4
    assert position[id(x)] < position[id(y)] < position[id(z)]


@pytest.mark.unit
def test_operator_sugar(rng):
    a = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
    out = ops.sum((a * 2.0 + 1.0 - a) @ np.eye(2))
    out.backward()
    assert np.allclose(a.grad, np.ones((2, 2)))
    assert np.array_equal((1.0 - a).data, 1.0 - a.data)
    assert np.array_equal(a[0].data, a.data[0])


# ---------------------------------------------------------------------------
# Gradient suite: every layer type over 20 seeds
# ---------------------------------------------------------------------------


def _projected(out: Tensor, weights: np.ndarray) -> Tensor:
    return ops.sum(ops.mul(out, Tensor(weights)))


def _unary(fn, shape=(3, 4), positive=False):
    def build(rng):
        x = rng.normal(size=shape)
        if positive:
            x = np.abs(x) + 0.5
        w = rng.normal(size=fn(Tensor(x)).shape)
        return (lambda t: _projected(fn(t), w)), Tensor(x)

    return build


def _binary(fn, shape=(3, 4)):
    def build(rng):
        other = Tensor(rng.normal(size=shape))
        w = rng.normal(size=shape)
        return (lambda t: _projected(fn(t, other), w)), Tensor(rng.normal(size=shape))

    return build


def _linear_weight(rng):
    x = Tensor(rng.normal(size=(2, 3, 4)))
    bias = Tensor(rng.normal(size=5))
    w = rng.normal(size=(2, 3, 5))
    return (lambda t: _projected(ops.linear(x, t, bias), w)), Tensor(rng.normal(size=(4, 5)))


def _linear_input(rng):
    weight, bias = Tensor(rng.normal(size=(4, 5))), Tensor(rng.normal(size=5))
    w = rng.normal(size=(2, 3, 5))
    return (lambda t: _projected(ops.linear(t, weight, bias), w)), Tensor(rng.normal(size=(2, 3, 4)))


def _conv_input(stride):
    def build(rng):
        weight, bias = Tensor(rng.normal(size=(3, 2, 3, 3))), Tensor(rng.normal(size=3))
        out_shape = ops.conv2d(np.zeros((2, 2, 5, 5)), weight, bias, stride, 1).shape
        w = rng.normal(size=out_shape)
        return (
            lambda t: _projected(ops.conv2d(t, weight, bias, stride, 1), w)
        ), Tensor(rng.normal(size=(2, 2, 5, 5)))

    return build


def _conv_weight(rng):
    x = Tensor(rng.normal(size=(2, 2, 5, 5)))
    bias = Tensor(rng.normal(size=3))
    w = rng.normal(size=(2, 3, 3, 3))
    return (lambda t: _projected(ops.conv2d(x, t, bias, 2, 1), w)), Tensor(rng.normal(size=(3, 2, 3, 3)))


def _conv_bias(rng):
    x = Tensor(rng.normal(size=(1, 2, 4, 4)))
    weight = Tensor(rng.normal(size=(3, 2, 3, 3)))
    w = rng.normal(size=(1, 3, 4, 4))
    return (lambda t: _projected(ops.conv2d(x, weight, t, 1, 1), w)), Tensor(rng.normal(size=3))


def _layer_norm_input(rng):
    gain, bias = Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4))
    w = rng.normal(size=(3, 4))
    return (lambda t: _projected(ops.layer_norm(t, gain, bias), w)), Tensor(rng.normal(size=(3, 4)))


def _layer_norm_gain(rng):
    x, bias = Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=4))
    w = rng.normal(size=(3, 4))
    return (lambda t: _projected(ops.layer_norm(x, t, bias), w)), Tensor(rng.normal(size=4))


def _dropout(rng):
    w = rng.normal(size=(3, 4))
    seed = int(rng.integers(1 << 30))
    return (
        lambda t: _projected(ops.dropout(t, 0.3, True, np.random.default_rng(seed)), w)
    ), Tensor(rng.normal(size=(3, 4)))


def _batched_matmul(rng):
    b = Tensor(rng.normal(size=(2, 4, 3)))
    w = rng.normal(size=(2, 3, 3))
    return (lambda t: _projected(ops.matmul(t, b), w)), Tensor(rng.normal(size=(2, 3, 4)))


def _matmul_right(rng):
    a = Tensor(rng.normal(size=(2, 3, 4)))
    w = rng.normal(size=(2, 3, 5))
    return (lambda t: _projected(ops.matmul(a, t), w)), Tensor(rng.normal(size=(4, 5)))


def _row_distance(rng):
    b = Tensor(rng.normal(size=(5, 3)))
    w = rng.normal(size=5)
    return (lambda t: _projected(ops.row_distance(t, b), w)), Tensor(rng.normal(size=(5, 3)))


def _concat(rng):
    other = Tensor(rng.normal(size=(2, 3)))
    w = rng.normal(size=(2, 5))
    return (lambda t: _projected(ops.concat([t, other], axis=1), w)), Tensor(rng.normal(size=(2, 2)))


GRADIENT_CASES = {
    "add": _binary(ops.add),
    "sub": _binary(ops.sub),
    "mul": _binary(ops.mul),
    "relu": _unary(ops.relu),
    "sigmoid": _unary(ops.sigmoid),
    "gelu": _unary(ops.gelu),
    "exp": _unary(ops.exp),
    "log": _unary(ops.log, positive=True),
    "clip": _unary(lambda t: ops.clip(t, -0.5, 0.5)),
    "sum_axis": _unary(lambda t: ops.sum(t, axis=1), shape=(2, 3, 4)),
    "mean_axes": _unary(lambda t: ops.mean(t, axis=(0, 2), keepdims=True), shape=(2, 3, 4)),
    "reshape": _unary(lambda t: ops.reshape(t, (4, 3))),
    "transpose": _unary(lambda t: ops.transpose(t, (2, 0, 1)), shape=(2, 3, 4)),
    "take_repeated": _unary(lambda t: ops.take(t, np.array([0, 0, 2]))),
    "expand": _unary(lambda t: ops.expand(t, 3)),
    "concat": _concat,
    "matmul_left": _batched_matmul,
    "matmul_right": _matmul_right,
    "linear_input": _linear_input,
    "linear_weight": _linear_weight,
    "conv2d_stride1": _conv_input(1),
    "conv2d_stride2": _conv_input(2),
    "conv2d_weight": _conv_weight,
    "conv2d_bias": _conv_bias,
    "upsample_nearest": _unary(lambda t: ops.upsample2x(t, "nearest"), shape=(2, 3, 3)),
    "upsample_bilinear": _unary(lambda t: ops.upsample2x(t, "bilinear"), shape=(2, 3, 3)),
    "softmax": _unary(lambda t: ops.softmax(t, axis=-1)),
    "log_softmax": _unary(lambda t: ops.log_softmax(t, axis=0)),
    "layer_norm_input": _layer_norm_input,
    "layer_norm_gain": _layer_norm_gain,
    "dropout": _dropout,
    "l2_normalize": _unary(lambda t: ops.l2_normalize(t, axis=-1)),
    "l2_normalize_eps": _unary(lambda t: ops.l2_normalize(t, axis=0, eps=1e-10)),
    "row_distance": _row_distance,
}


@pytest.mark.unit
@pytest.mark.parametrize("case", sorted(GRADIENT_CASES))
def test_gradient_matches_finite_differences(case):
    """Analytic gradients agree with central differences over 20 seeds"""
    for seed in SEEDS:
        f, x = GRADIENT_CASES[case](np.random.default_rng([seed, 99]))
        error = finite_diff_check(f, x)
        assert error < GRAD_TOL, f"{case} seed {seed}: relative error {error:.3e}"
