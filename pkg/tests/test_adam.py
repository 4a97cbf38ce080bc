"""Adam optimizer unit vectors against closed-form and scalar references."""

import numpy as np
import pytest

from avsync import tensor as T
from avsync.errors import ConfigError
from avsync.optim import Adam

from oracles import adam_scalar_reference


def param(value):
    return T.Tensor(np.asarray(value, dtype=np.float32), requires_grad=True)


def test_zero_gradient_leaves_params_unchanged():
    p = param([1.0, -2.0, 3.0])
    opt = Adam({"p": p}, lr=0.1)
    p.grad = np.zeros(3, dtype=np.float32)
    opt.step()
    np.testing.assert_array_equal(p.data, np.array([1.0, -2.0, 3.0], np.float32))


def test_missing_gradient_skipped():
    p = param([1.0])
    opt = Adam({"p": p}, lr=0.1)
    opt.step()
    np.testing.assert_array_equal(p.data, np.array([1.0], np.float32))


def test_first_step_is_signed_lr():
    # from zero state: |delta + lr * sign(g)| <= 1e-6 at eps = 1e-8
    for g in (0.7, -1.3, 4.0):
        p = param([0.5])
        opt = Adam({"p": p}, lr=0.01, eps=1e-8)
        p.grad = np.array([g], dtype=np.float32)
        opt.step()
        delta = float(p.data[0]) - 0.5
        assert abs(delta + 0.01 * np.sign(g)) <= 1e-6


def test_two_steps_match_scalar_reference():
    lr, b1, b2, eps = 3e-3, 0.5, 0.999, 1e-8
    grads = [0.37, -0.21]
    p = param([0.5])
    opt = Adam({"p": p}, lr=lr, beta1=b1, beta2=b2, eps=eps)
    for g in grads:
        p.grad = np.array([g], dtype=np.float32)
        opt.step()
    ref = adam_scalar_reference(0.5, grads, lr, b1, b2, eps)
    assert abs(float(p.data[0]) - ref) < 1e-7


def test_weight_decay_matches_scalar_reference():
    lr, b1, b2, eps, wd = 1e-2, 0.9, 0.999, 1e-8, 0.1
    grads = [0.2, 0.1, -0.3]
    p = param([0.8])
    opt = Adam({"p": p}, lr=lr, beta1=b1, beta2=b2, eps=eps, weight_decay=wd)
    ref = 0.8
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        p.grad = np.array([g], dtype=np.float32)
        opt.step()
        gd = g + wd * ref
        m = b1 * m + (1 - b1) * gd
        v = b2 * v + (1 - b2) * gd * gd
        ref -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    assert abs(float(p.data[0]) - ref) < 1e-6


def test_step_counter_increments():
    p = param([1.0])
    opt = Adam({"p": p}, lr=0.1)
    for expect in (1, 2, 3):
        p.grad = np.array([0.5], dtype=np.float32)
        opt.step()
        assert opt.step_count == expect


def test_nonpositive_lr_rejected():
    with pytest.raises(ConfigError):
        Adam({"p": param([1.0])}, lr=0.0)
    with pytest.raises(ConfigError):
        Adam({"p": param([1.0])}, lr=-1e-3)


def test_moment_shapes_match_params():
    p = param(np.zeros((3, 4)))
    opt = Adam({"p": p}, lr=0.1)
    assert opt.m["p"].shape == (3, 4)
    assert opt.v["p"].shape == (3, 4)


def test_state_round_trip_is_exact():
    rng = np.random.default_rng(0)
    p = param(rng.normal(size=(4,)))
    opt = Adam({"p": p}, lr=0.01)
    for _ in range(3):
        p.grad = rng.normal(size=4).astype(np.float32)
        opt.step()
    saved = {k: v.copy() for k, v in opt.state_arrays().items()}
    step = opt.step_count

    p2 = param(p.data.copy())
    opt2 = Adam({"p": p2}, lr=0.01)
    opt2.load_state_arrays(saved, step)
    g = rng.normal(size=4).astype(np.float32)
    p.grad = g.copy()
    p2.grad = g.copy()
    opt.step()
    opt2.step()
    np.testing.assert_array_equal(p.data, p2.data)
    np.testing.assert_array_equal(opt.m["p"], opt2.m["p"])
