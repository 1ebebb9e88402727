import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sesr import tensor as T

from conftest import naive_conv2d


def test_conv_scalar_kernel():
    x = np.ones((1, 3, 3, 1), np.float32)
    k = np.full((1, 1, 1, 1), 2.0, np.float32)
    assert np.array_equal(T.conv2d(x, k, "valid"), np.full((1, 3, 3, 1), 2.0, np.float32))


def test_conv_window_population():
    y = T.conv2d(np.ones((1, 5, 5, 1), np.float32), np.ones((3, 3, 1, 1), np.float32), "same")
    assert y[0, 2, 2, 0] == 9.0
    assert y[0, 0, 0, 0] == 4.0
    assert y[0, 0, 2, 0] == 6.0


def test_conv_matches_direct_loops(rng):
    x = rng.standard_normal((1, 8, 8, 3)).astype(np.float32)
    k = rng.standard_normal((3, 3, 3, 4)).astype(np.float32)
    y = T.conv2d(x, k, "same")
    assert y.dtype == np.float32
    assert np.abs(y - naive_conv2d(x, k)).max() <= 1e-6 * max(1.0, np.abs(y).max())


@pytest.mark.parametrize("ksize,padding", [(1, "same"), (3, "valid"), (5, "same"), (5, "valid")])
def test_conv_with_bias_matches_direct_loops(rng, ksize, padding):
    x = rng.standard_normal((2, 7, 6, 2))
    k = rng.standard_normal((ksize, ksize, 2, 3))
    b = rng.standard_normal(3)
    assert np.allclose(T.conv2d(x, k, padding, b), naive_conv2d(x, k, padding, b), atol=1e-12)


def test_conv_errors(rng):
    x = rng.standard_normal((1, 4, 4, 2))
    with pytest.raises(ValueError, match="channel"):
        T.conv2d(x, np.zeros((3, 3, 3, 1)))
    with pytest.raises(ValueError, match="larger"):
        T.conv2d(x, np.zeros((5, 5, 2, 1)), "valid")


def test_conv_is_linear(rng):
    x, y = rng.standard_normal((2, 1, 9, 9, 3)).astype(np.float32)
    k = rng.standard_normal((3, 3, 3, 2)).astype(np.float32)
    a, b = 0.7, -1.3
    lhs = T.conv2d(a * x + b * y, k)
    rhs = a * T.conv2d(x, k) + b * T.conv2d(y, k)
    assert np.abs(lhs - rhs).max() <= 1e-5


def test_conv_then_pointwise_equals_fused(rng):
    x = rng.standard_normal((1, 6, 6, 2))
    k1 = rng.standard_normal((3, 3, 2, 5))
    k2 = rng.standard_normal((1, 1, 5, 3))
    fused = np.einsum("ijcp,po->ijco", k1, k2[0, 0])
    seq = naive_conv2d(naive_conv2d(x, k1), k2)
    assert np.abs(naive_conv2d(x, fused) - seq).max() <= 1e-10
    assert np.abs(T.conv2d(x, fused) - seq).max() <= 1e-10


def test_conv_backward_finite_differences(rng):
    x = rng.standard_normal((1, 5, 4, 2))
    k = rng.standard_normal((3, 3, 2, 3))
    g = rng.standard_normal((1, 5, 4, 3))
    gx, gk = T.conv2d_backward(x, k, g)
    h = 1e-6
    for arr, grad in ((x, gx), (k, gk)):
        for idx in [(0, 0, 0, 0), tuple(s // 2 for s in arr.shape), tuple(s - 1 for s in arr.shape)]:
            orig = arr[idx]
            arr[idx] = orig + h
            up = (T.conv2d(x, k) * g).sum()
            arr[idx] = orig - h
            down = (T.conv2d(x, k) * g).sum()
            arr[idx] = orig
            assert abs((up - down) / (2 * h) - grad[idx]) < 1e-6


def test_zero_pad():
    x = np.full((1, 1, 1, 1), 7.0)
    y = T.zero_pad(x, 1, 1)
    assert y.shape == (1, 3, 3, 1)
    assert y[0, 1, 1, 0] == 7 and y.sum() == 7
    assert np.array_equal(T.zero_pad(x, 0, 0), x)


def test_zero_pad_preserves_sum(rng):
    x = rng.standard_normal((1, 2, 2, 2))
    y = T.zero_pad(x, 2, 2)
    assert y.shape == (1, 6, 6, 2)
    assert np.isclose(y.sum(), x.sum(), rtol=0, atol=1e-12)
    assert np.array_equal(y[:, 2:4, 2:4], x)


def test_prelu_and_relu():
    x = np.array([-1.0, 2.0]).reshape(1, 1, 2, 1)
    assert np.array_equal(T.prelu(x, np.array([0.25])).ravel(), [-0.25, 2.0])
    neg = -np.abs(np.random.default_rng(0).standard_normal((1, 3, 3, 2))) - 0.1
    assert np.array_equal(T.prelu(neg, np.zeros(2)), np.zeros_like(neg))
    assert np.array_equal(T.relu(neg), np.zeros_like(neg))
    with pytest.raises(ValueError):
        T.prelu(x, np.array([0.1, 0.2]))


@given(st.lists(st.floats(-1e3, 1e3), min_size=6, max_size=6))
def test_prelu_limits(values):
    x = np.array(values).reshape(1, 1, 3, 2)
    assert np.array_equal(T.prelu(x, np.ones(2)), x)
    assert np.array_equal(T.prelu(x, np.zeros(2)), T.relu(x))


def test_depth_to_space_ordering():
    x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 1, 4)
    assert np.array_equal(T.depth_to_space(x, 2)[0, :, :, 0], [[1, 2], [3, 4]])
    assert np.array_equal(T.depth_to_space(x, 1), x)
    with pytest.raises(ValueError):
        T.depth_to_space(np.zeros((1, 2, 2, 6)), 2)


def test_depth_to_space_group_layout():
    # with two output channels, group (i, j) occupies channels 2*(2i+j) and 2*(2i+j)+1
    x = np.arange(8.0).reshape(1, 1, 1, 8)
    y = T.depth_to_space(x, 2)
    assert np.array_equal(y[0, 1, 0], [4.0, 5.0])


def test_space_to_depth_round_trip(rng):
    x = rng.standard_normal((1, 3, 5, 16)).astype(np.float32)
    y = T.depth_to_space(x, 4)
    assert y.shape == (1, 12, 20, 1)
    assert np.array_equal(T.space_to_depth(y, 4), x)


@settings(max_examples=30)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.sampled_from([1, 2, 3]))
def test_depth_to_space_bijection(n, h, w, c, b):
    x = np.arange(n * h * w * c * b * b, dtype=np.float64).reshape(n, h, w, c * b * b)
    y = T.depth_to_space(x, b)
    assert sorted(y.ravel()) == sorted(x.ravel())
    assert np.array_equal(T.space_to_depth(y, b), x)
