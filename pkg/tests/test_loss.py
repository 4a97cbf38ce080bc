"""Loss unit vectors and properties, with the graph path checked against the
scalar implementation and finite differences."""

import numpy as np
import pytest

from avsync import tensor as T
from avsync.errors import ConfigError, ShapeError
from avsync.loss import (LossConfig, l2_penalty, l2_penalty_graph, margin_bce,
                         margin_bce_graph, total_loss)

from oracles import margin_bce_scalar, numeric_grad


class TestMarginBce:
    def test_perfect_positive_is_zero(self):
        assert margin_bce([1.0], [1], [0.0]) == 0.0

    def test_sub_margin_negative_is_zero(self):
        assert margin_bce([0.2], [0], [0.3]) == 0.0

    def test_active_negative_hand_value(self):
        # -log(1 - (0.8 - 0.3)) = log 2
        v = margin_bce([0.8], [0], [0.3])
        assert v == pytest.approx(np.log(2.0), abs=1e-12)

    def test_two_sample_batch_matches_oracle(self):
        v = margin_bce([0.9, 0.8], [1, 0], [0.0, 0.3])
        ref = margin_bce_scalar([0.9, 0.8], [1, 0], [0.0, 0.3])
        assert v == pytest.approx(ref, abs=1e-12)
        assert v == pytest.approx((-np.log(0.9) + np.log(2.0)) / 2.0, abs=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            margin_bce([0.5, 0.5], [1], [0.0])

    def test_p_out_of_range_rejected(self):
        with pytest.raises(ShapeError):
            margin_bce([1.2], [1], [0.0])
        with pytest.raises(ShapeError):
            margin_bce([-0.1], [0], [0.0])

    def test_clamping_keeps_result_finite(self):
        v = margin_bce([0.0, 1.0], [1, 0], [0.0, 0.0], clamp_eps=1e-7)
        assert np.isfinite(v)
        assert v == pytest.approx(-np.log(1e-7), rel=1e-6)

    def test_monotone_in_p(self):
        grid = np.linspace(0.0, 1.0, 101)
        neg = [margin_bce([p], [0], [0.3]) for p in grid]
        assert all(b >= a - 1e-12 for a, b in zip(neg, neg[1:]))
        pos = [margin_bce([p], [1], [0.0]) for p in grid]
        assert all(b <= a + 1e-12 for a, b in zip(pos, pos[1:]))

    def test_reduces_to_bce_when_margin_zero(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            p = rng.uniform(0.05, 0.95, size=n)
            y = rng.integers(0, 2, size=n)
            v = margin_bce(p, y, np.zeros(n))
            bce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
            assert abs(v - bce) < 1e-6

    def test_result_nonnegative(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 6))
            p = rng.uniform(0, 1, size=n)
            y = rng.integers(0, 2, size=n)
            m = np.where(y == 1, 0.0, rng.uniform(0, 0.9, size=n))
            assert margin_bce(p, y, m) >= 0.0


class TestMarginBceGraph:
    def test_matches_scalar_on_random_batches(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(1, 10))
            p = rng.uniform(0, 1, size=n).astype(np.float32)
            y = rng.integers(0, 2, size=n).astype(np.float32)
            m = np.where(y == 1, 0.0, rng.uniform(0, 0.8, size=n)).astype(np.float32)
            g = margin_bce_graph(T.Tensor(p), y, m)
            assert float(g.data) == pytest.approx(margin_bce(p, y, m), abs=1e-6)

    def test_gradient_flat_inside_margin(self):
        p = T.Tensor(np.array([0.25, 0.6], dtype=np.float32), requires_grad=True)
        loss = margin_bce_graph(p, np.array([0.0, 0.0]), np.array([0.3, 0.3]))
        T.backward(loss)
        assert p.grad[0] == 0.0
        assert p.grad[1] != 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        p0 = rng.uniform(0.05, 0.95, size=6)
        y = rng.integers(0, 2, size=6).astype(np.float64)
        m = np.where(y == 1, 0.0, 0.3)

        leaf = T.Tensor(p0, requires_grad=True)
        T.backward(margin_bce_graph(leaf, y, m))

        def f(arrs):
            return float(margin_bce_graph(T.Tensor(arrs[0]), y, m).data)

        num = numeric_grad(f, [p0], 0, h=1e-6)
        np.testing.assert_allclose(leaf.grad, num, rtol=1e-6, atol=1e-9)


class TestL2Penalty:
    def test_lambda_zero(self):
        assert l2_penalty([np.array([3.0, 4.0])], 0.0) == 0.0

    def test_hand_value(self):
        assert l2_penalty([np.array([3.0, 4.0])], 0.5) == pytest.approx(12.5)

    def test_quadratic_homogeneity(self):
        rng = np.random.default_rng(4)
        ws = [rng.normal(size=(3, 4)), rng.normal(size=(5,))]
        base = l2_penalty(ws, 1e-3)
        doubled = l2_penalty([2 * w for w in ws], 1e-3)
        assert doubled == pytest.approx(4.0 * base, rel=1e-12)

    def test_graph_matches_plain(self):
        rng = np.random.default_rng(5)
        ws = [rng.normal(size=(2, 3)).astype(np.float32) for _ in range(3)]
        tensors = [T.Tensor(w, requires_grad=True) for w in ws]
        g = l2_penalty_graph(tensors, 0.01)
        assert float(g.data) == pytest.approx(l2_penalty(ws, 0.01), rel=1e-6)

    def test_graph_none_when_off(self):
        assert l2_penalty_graph([T.Tensor(np.ones(2))], 0.0) is None


class TestTotalLoss:
    def test_lambda_zero_reduces_to_margin_bce(self):
        rng = np.random.default_rng(6)
        p = rng.uniform(0.1, 0.9, size=5).astype(np.float32)
        y = rng.integers(0, 2, size=5).astype(np.float32)
        m = np.where(y == 1, 0.0, 0.2).astype(np.float32)
        w = [T.Tensor(rng.normal(size=(3, 3)).astype(np.float32), requires_grad=True)]
        out = total_loss(T.Tensor(p), y, m, w, LossConfig(l2_lambda=0.0))
        assert float(out.data) == pytest.approx(margin_bce(p, y, m), abs=1e-6)

    def test_inactive_negatives_and_perfect_positives_zero(self):
        p = np.array([1.0, 0.1], dtype=np.float32)
        y = np.array([1.0, 0.0], dtype=np.float32)
        m = np.array([0.0, 0.3], dtype=np.float32)
        out = total_loss(T.Tensor(p), y, m, [], LossConfig(l2_lambda=0.0))
        assert float(out.data) == 0.0

    def test_gradients_flow_to_weights_through_penalty(self):
        w = T.Tensor(np.array([[1.0, -2.0]], dtype=np.float32), requires_grad=True)
        p = T.Tensor(np.array([0.5], dtype=np.float32), requires_grad=True)
        out = total_loss(p, np.array([1.0]), np.array([0.0]), [w],
                         LossConfig(l2_lambda=0.1))
        T.backward(out)
        np.testing.assert_allclose(w.grad, 0.1 * 2 * w.data, rtol=1e-6)
        assert p.grad is not None

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            LossConfig(l2_lambda=-1.0)
        with pytest.raises(ConfigError):
            LossConfig(clamp_eps=0.0)
        with pytest.raises(ConfigError):
            LossConfig(clamp_eps=0.1)
