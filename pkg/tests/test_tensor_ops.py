"""Forward-op contracts for the tensor layer, checked against naive oracles."""

import numpy as np
import pytest

from avsync import tensor as T
from avsync.errors import ShapeError

from oracles import adaptive_avg_pool2d_naive, conv2d_naive, linear_naive


def t(arr, grad=False):
    return T.Tensor(np.asarray(arr, dtype=np.float32), requires_grad=grad)


class TestConv2d:
    def test_identity_kernel(self):
        x = t(np.full((1, 1, 3, 3), 2.0))
        w = t(np.ones((1, 1, 1, 1)))
        b = t(np.zeros(1))
        out = T.conv2d(x, w, b, stride=(1, 1), padding=(0, 0))
        assert out.shape == (1, 1, 3, 3)
        np.testing.assert_array_equal(out.data, np.full((1, 1, 3, 3), 2.0, np.float32))

    def test_zero_kernel_gives_bias(self):
        rng = np.random.default_rng(0)
        x = t(rng.normal(size=(2, 3, 5, 5)))
        w = t(np.zeros((4, 3, 3, 3)))
        b = t([1.0, -2.0, 0.5, 3.0])
        out = T.conv2d(x, w, b, stride=(1, 1), padding=(1, 1))
        for c, bias in enumerate([1.0, -2.0, 0.5, 3.0]):
            np.testing.assert_allclose(out.data[:, c], bias, rtol=0, atol=0)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(42)
        x = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
        w = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
        b = rng.normal(size=4).astype(np.float32)
        out = T.conv2d(t(x), t(w), t(b), stride=(1, 1), padding=(0, 0))
        ref = conv2d_naive(x, w, b, (1, 1), (0, 0))
        np.testing.assert_allclose(out.data, ref, atol=1e-5)

    @pytest.mark.parametrize("stride,pad", [((1, 1), (1, 1)), ((2, 2), (1, 1)),
                                            ((2, 1), (0, 1)), ((3, 2), (2, 0))])
    def test_strided_padded_matches_naive(self, stride, pad):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 2, 9, 7)).astype(np.float32)
        w = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
        b = rng.normal(size=3).astype(np.float32)
        out = T.conv2d(t(x), t(w), t(b), stride=stride, padding=pad)
        ref = conv2d_naive(x, w, b, stride, pad)
        assert out.shape == ref.shape
        np.testing.assert_allclose(out.data, ref, atol=1e-5)

    def test_output_shape_formula_fuzz(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            h, w = int(rng.integers(3, 16)), int(rng.integers(3, 16))
            kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            sh, sw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            ph, pw = int(rng.integers(0, 3)), int(rng.integers(0, 3))
            if h + 2 * ph < kh or w + 2 * pw < kw:
                continue
            x = t(rng.normal(size=(1, 2, h, w)))
            wt = t(rng.normal(size=(3, 2, kh, kw)))
            out = T.conv2d(x, wt, t(np.zeros(3)), (sh, sw), (ph, pw))
            oh = (h + 2 * ph - kh) // sh + 1
            ow = (w + 2 * pw - kw) // sw + 1
            assert out.shape == (1, 3, oh, ow)

    def test_channel_mismatch_raises(self):
        with pytest.raises(ShapeError):
            T.conv2d(t(np.zeros((1, 3, 4, 4))), t(np.zeros((2, 4, 3, 3))),
                     t(np.zeros(2)))

    def test_linearity_in_input(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(1, 2, 6, 6)).astype(np.float32)
        w = t(rng.normal(size=(2, 2, 3, 3)))
        b = t(np.zeros(2))
        out1 = T.conv2d(t(3.0 * x), w, b, (1, 1), (1, 1))
        out2 = T.conv2d(t(x), w, b, (1, 1), (1, 1))
        np.testing.assert_allclose(out1.data, 3.0 * out2.data, rtol=1e-5, atol=1e-5)

    def test_deterministic(self):
        rng = np.random.default_rng(11)
        x = t(rng.normal(size=(2, 3, 10, 10)))
        w = t(rng.normal(size=(4, 3, 3, 3)))
        b = t(rng.normal(size=4))
        a = T.conv2d(x, w, b, (2, 2), (1, 1)).data
        b2 = T.conv2d(x, w, b, (2, 2), (1, 1)).data
        assert np.array_equal(a, b2)


class TestBatchNorm:
    def test_constant_channel_zeroed(self):
        x = t(np.full((2, 3, 4, 4), 5.0))
        gamma, beta = t(np.ones(3), grad=True), t(np.zeros(3), grad=True)
        state = T.BatchNormState(3)
        out = T.batchnorm2d(x, gamma, beta, state, train=True)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_gamma_zero_gives_beta(self):
        rng = np.random.default_rng(1)
        x = t(rng.normal(size=(2, 3, 4, 4)))
        out = T.batchnorm2d(x, t(np.zeros(3)), t([1.0, 2.0, 3.0]),
                            T.BatchNormState(3), train=True)
        for c, b in enumerate([1.0, 2.0, 3.0]):
            np.testing.assert_allclose(out.data[:, c], b, atol=1e-6)

    def test_train_statistics_recomputed_from_output(self):
        rng = np.random.default_rng(2)
        x = t(rng.normal(loc=3.0, scale=2.0, size=(4, 3, 6, 6)))
        gamma = t([1.5, 0.5, 2.0])
        beta = t([0.1, -0.2, 0.3])
        out = T.batchnorm2d(x, gamma, beta, T.BatchNormState(3), train=True)
        mean = out.data.mean(axis=(0, 2, 3))
        var = out.data.var(axis=(0, 2, 3))
        np.testing.assert_allclose(mean, [0.1, -0.2, 0.3], atol=1e-5)
        np.testing.assert_allclose(var, np.array([1.5, 0.5, 2.0]) ** 2,
                                   rtol=1e-3)

    def test_running_stats_updated_only_in_train(self):
        rng = np.random.default_rng(3)
        x = t(rng.normal(loc=1.0, size=(4, 2, 5, 5)))
        state = T.BatchNormState(2)
        before = state.copy()
        T.batchnorm2d(x, t(np.ones(2)), t(np.zeros(2)), state, train=False)
        assert np.array_equal(state.running_mean, before.running_mean)
        assert np.array_equal(state.running_var, before.running_var)
        T.batchnorm2d(x, t(np.ones(2)), t(np.zeros(2)), state, train=True)
        assert not np.array_equal(state.running_mean, before.running_mean)

    def test_eval_uses_running_stats(self):
        state = T.BatchNormState(1)
        state.running_mean = np.array([2.0], dtype=np.float32)
        state.running_var = np.array([4.0], dtype=np.float32)
        x = t(np.full((1, 1, 2, 2), 4.0))
        out = T.batchnorm2d(x, t(np.ones(1)), t(np.zeros(1)), state, train=False)
        np.testing.assert_allclose(out.data, (4.0 - 2.0) / np.sqrt(4.0 + 1e-5),
                                   rtol=1e-6)


class TestReLU:
    def test_sign_cases(self):
        out = T.relu(t([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        x = t(rng.normal(size=(50,)))
        once = T.relu(x).data
        twice = T.relu(T.relu(x)).data
        assert np.array_equal(once, twice)

    def test_gradient_convention(self):
        x = t([-2.0, 0.0, 3.0], grad=True)
        y = T.sum_all(T.relu(x))
        T.backward(y)
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


class TestAdaptivePool:
    def test_constant_invariance(self):
        for oh, ow in [(1, 1), (2, 3), (5, 5), (7, 2)]:
            x = t(np.full((1, 2, 5, 4), 3.25))
            out = T.adaptive_avg_pool2d(x, oh, ow)
            assert out.shape == (1, 2, oh, ow)
            np.testing.assert_allclose(out.data, 3.25, rtol=1e-6)

    def test_identity_when_sizes_match(self):
        rng = np.random.default_rng(6)
        x = t(rng.normal(size=(2, 3, 4, 4)))
        out = T.adaptive_avg_pool2d(x, 4, 4)
        assert np.array_equal(out.data, x.data)

    def test_4x4_to_2x2_blocks(self):
        x = t(np.arange(1, 17, dtype=np.float32).reshape(1, 1, 4, 4))
        out = T.adaptive_avg_pool2d(x, 2, 2)
        np.testing.assert_allclose(out.data[0, 0], [[3.5, 5.5], [11.5, 13.5]])

    def test_matches_naive_oracle_including_upsample(self):
        rng = np.random.default_rng(8)
        for oh, ow in [(3, 3), (2, 5), (12, 12), (7, 1)]:
            x = rng.normal(size=(2, 3, 5, 8)).astype(np.float32)
            out = T.adaptive_avg_pool2d(t(x), oh, ow)
            ref = adaptive_avg_pool2d_naive(x, oh, ow)
            np.testing.assert_allclose(out.data, ref, atol=1e-6)

    def test_global_mean_preserved_when_tiling(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(1, 1, 8, 8)).astype(np.float32)
        out = T.adaptive_avg_pool2d(t(x), 2, 2)
        np.testing.assert_allclose(out.data.mean(), x.mean(), atol=1e-6)


class TestLinear:
    def test_identity_weight(self):
        x = t(np.arange(6, dtype=np.float32).reshape(2, 3))
        out = T.linear(x, t(np.eye(3)), t(np.zeros(3)))
        assert np.array_equal(out.data, x.data)

    def test_zero_weight_bias_broadcast(self):
        x = t(np.ones((4, 3)))
        out = T.linear(x, t(np.zeros((2, 3))), t([5.0, -1.0]))
        np.testing.assert_array_equal(out.data, np.tile([5.0, -1.0], (4, 1)))

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(5, 7)).astype(np.float32)
        w = rng.normal(size=(4, 7)).astype(np.float32)
        b = rng.normal(size=4).astype(np.float32)
        out = T.linear(t(x), t(w), t(b))
        np.testing.assert_allclose(out.data, linear_naive(x, w, b), atol=1e-5)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            T.linear(t(np.zeros((2, 3))), t(np.zeros((4, 5))), t(np.zeros(4)))


class TestFiniteness:
    def test_forward_ops_finite_on_finite_inputs(self):
        rng = np.random.default_rng(12)
        x = t(rng.normal(size=(2, 4, 9, 9)) * 10)
        w = t(rng.normal(size=(8, 4, 3, 3)))
        b = t(rng.normal(size=8))
        y = T.conv2d(x, w, b, (2, 2), (1, 1))
        y = T.batchnorm2d(y, t(np.ones(8)), t(np.zeros(8)), T.BatchNormState(8), True)
        y = T.relu(y)
        y = T.adaptive_avg_pool2d(y, 3, 3)
        assert np.all(np.isfinite(y.data))
