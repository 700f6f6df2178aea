import numpy as np
import pytest

from src.core.errors import NonFiniteError, ShapeError
from src.nn import functional as F
from src.nn.gradcheck import finite_diff_check
from src.nn.layers import Conv2d, Linear, Module, Parameter
from src.nn.optim import Adam
from src.nn.tensor import Tensor, default_dtype, precision

TOLERANCE = 1e-5


def _leaf(rng, *shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, shape), requires_grad=True)


def _weights(shape, seed=7):
    """Fixed random projection so scalar losses depend on every output entry."""
    return np.random.default_rng(seed).normal(size=shape)


def _project(out: Tensor) -> Tensor:
    return (out * _weights(out.shape)).sum()


@pytest.mark.usefixtures('float64')
@pytest.mark.parametrize('op', [
    lambda a, b: a + b, lambda a, b: a - b, lambda a, b: a * b, lambda a, b: a / (b * b + 1.0),
    lambda a, b: a @ b.T, lambda a, b: -a ** 2.0,
])
def test_binary_ops_match_finite_differences(op, rng):
    a, b = _leaf(rng, 3, 4), _leaf(rng, 3, 4)
    assert finite_diff_check(lambda: _project(op(a, b)), [a, b]) < TOLERANCE


@pytest.mark.usefixtures('float64')
def test_broadcast_gradients_sum_back(rng):
    a, b = _leaf(rng, 3, 4), _leaf(rng, 4)
    assert finite_diff_check(lambda: _project(a * b + b), [a, b]) < TOLERANCE
    (a + b).sum().backward()
    assert b.grad.shape == (4,)


@pytest.mark.usefixtures('float64')
@pytest.mark.parametrize('fn', [
    F.relu, lambda x: F.leaky_relu(x, 0.2), F.sigmoid, F.exp, lambda x: F.softmax(x, axis=-1),
    lambda x: F.log_softmax(x, axis=-1), lambda x: x.T, lambda x: x.reshape(2, 6), lambda x: x[1:, ::2],
    lambda x: F.take(x, [0, 2, 2], axis=1), lambda x: F.roll(x, 1, axis=1), lambda x: x.mean(axis=0),
    lambda x: F.concat([x, x * 2.0], axis=0), lambda x: F.stack([x, x], axis=1),
])
def test_unary_ops_match_finite_differences(fn, rng):
    x = _leaf(rng, 3, 4)
    assert finite_diff_check(lambda: _project(fn(x)), [x]) < TOLERANCE


@pytest.mark.usefixtures('float64')
def test_log_on_positive_inputs(rng):
    x = _leaf(rng, 5, low=0.5, high=2.0)
    assert finite_diff_check(lambda: _project(F.log(x)), [x]) < TOLERANCE


@pytest.mark.usefixtures('float64')
def test_masked_softmax(rng):
    x = _leaf(rng, 3, 3)
    mask = ~np.eye(3, dtype=bool)
    out = F.softmax(x, axis=-1, mask=mask)
    assert np.allclose(out.numpy().sum(axis=-1), 1.0)
    assert np.all(out.numpy()[np.eye(3, dtype=bool)] == 0.0)
    assert finite_diff_check(lambda: _project(F.softmax(x, axis=-1, mask=mask)), [x]) < TOLERANCE


def test_fully_masked_row_is_zero():
    out = F.softmax(Tensor(np.zeros((1, 1))), mask=np.zeros((1, 1), dtype=bool))
    assert out.numpy().tolist() == [[0.0]]


def _loop_conv(x, w, b, stride, padding, dilation):
    c_in, height, width = x.shape
    c_out, _, kh, kw = w.shape
    padded = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    out_h = (height + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    out_w = (width + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    out = np.zeros((c_out, out_h, out_w))
    for o in range(c_out):
        for r in range(out_h):
            for c in range(out_w):
                total = b[o]
                for ci in range(c_in):
                    for i in range(kh):
                        for j in range(kw):
                            total += w[o, ci, i, j] * padded[ci, r * stride + i * dilation, c * stride + j * dilation]
                out[o, r, c] = total
    return out


@pytest.mark.usefixtures('float64')
@pytest.mark.parametrize('stride,padding,dilation', [(1, 1, 1), (2, 1, 1), (1, 2, 2), (1, 0, 1)])
def test_conv2d_matches_loops_and_gradients(stride, padding, dilation, rng):
    x, w, b = _leaf(rng, 2, 7, 7), _leaf(rng, 3, 2, 3, 3), _leaf(rng, 3)
    out = F.conv2d(x, w, b, stride=stride, padding=padding, dilation=dilation)
    assert np.allclose(out.numpy(), _loop_conv(x.numpy(), w.numpy(), b.numpy(), stride, padding, dilation))
    check = finite_diff_check(lambda: _project(F.conv2d(x, w, b, stride=stride, padding=padding, dilation=dilation)),
                              [x, w, b])
    assert check < TOLERANCE


def test_conv2d_shape_errors(rng):
    with pytest.raises(ShapeError):
        F.conv2d(Tensor(rng.normal(size=(2, 5, 5))), Tensor(rng.normal(size=(1, 3, 3, 3))))
    with pytest.raises(ShapeError):
        F.conv2d(Tensor(rng.normal(size=(1, 2, 2))), Tensor(rng.normal(size=(1, 1, 5, 5))))


@pytest.mark.usefixtures('float64')
def test_pooling_and_upsampling(rng):
    x = _leaf(rng, 2, 4, 4)
    pooled = F.max_pool2(x)
    assert np.allclose(pooled.numpy(), x.numpy().reshape(2, 2, 2, 2, 2).max(axis=(2, 4)))
    assert finite_diff_check(lambda: _project(F.max_pool2(x)), [x]) < TOLERANCE
    assert finite_diff_check(lambda: _project(F.nearest_upsample2(x)), [x]) < TOLERANCE
    with pytest.raises(ShapeError):
        F.max_pool2(Tensor(np.zeros((1, 3, 4))))


@pytest.mark.usefixtures('float64')
def test_linear_map_with_permutation(rng):
    x = _leaf(rng, 2, 3, 3)
    permutation = np.eye(9)[rng.permutation(9)]
    out = F.linear_map(x, permutation)
    assert np.allclose(out.numpy().reshape(2, 9), x.numpy().reshape(2, 9) @ permutation.T)
    assert finite_diff_check(lambda: _project(F.linear_map(x, permutation)), [x]) < TOLERANCE


@pytest.mark.usefixtures('float64')
def test_layers_match_finite_differences(rng):
    linear = Linear(4, 3, rng)
    conv = Conv2d(2, 2, 3, rng, stride=2)
    x = _leaf(rng, 5, 4)
    image = _leaf(rng, 2, 6, 6)
    assert finite_diff_check(lambda: _project(F.relu(linear(x))), [x] + linear.parameters()) < TOLERANCE
    assert finite_diff_check(lambda: _project(conv(image)), [image] + conv.parameters()) < TOLERANCE
    assert conv(image).shape == (2, 3, 3)


def test_shared_node_accumulates(float64):
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * x + x
    y.sum().backward()
    assert np.allclose(x.grad, [5.0])


def test_backward_needs_scalar():
    with pytest.raises(ValueError):
        Tensor(np.ones(3), requires_grad=True).backward()


def test_non_finite_is_rejected():
    with pytest.raises(NonFiniteError):
        Tensor([np.nan])
    with pytest.raises(NonFiniteError):
        F.log(Tensor([0.0]))


def test_precision_context_restores_default():
    assert default_dtype() == np.float32
    with precision(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32
    with pytest.raises(ValueError):
        with precision(np.int32):
            pass


class _Pair(Module):
    def __init__(self, rng):
        super().__init__()
        self.first = Linear(2, 2, rng)
        self.scale = Parameter(np.ones(1))


def test_state_dict_round_trip_and_mismatch(rng):
    source, target = _Pair(rng), _Pair(np.random.default_rng(99))
    assert [name for name, _ in source.named_parameters()] == ['scale', 'first.weight', 'first.bias']
    target.load_state_dict(source.state_dict())
    for a, b in zip(source.parameters(), target.parameters()):
        assert np.array_equal(a.numpy(), b.numpy())
    with pytest.raises(ShapeError):
        target.load_state_dict({'scale': np.ones(2), 'first.weight': np.ones((2, 2)), 'first.bias': np.ones(2)})
    with pytest.raises(ShapeError):
        target.load_state_dict({'scale': np.ones(1)})


def test_adam_minimises_quadratic(float64):
    w = Parameter(np.array([3.0, -2.0]))
    optimizer = Adam([w], lr=0.1)
    for _ in range(300):
        optimizer.zero_grad()
        ((w - 1.0) ** 2.0).sum().backward()
        optimizer.step()
    assert np.allclose(w.numpy(), [1.0, 1.0], atol=1e-2)


def test_adam_skips_parameters_without_gradient():
    w = Parameter(np.array([1.0]))
    optimizer = Adam([w], lr=0.1)
    optimizer.step()
    assert w.numpy().tolist() == [1.0]
