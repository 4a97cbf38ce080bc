"""Margin-based binary cross-entropy with an L2 weight penalty.

For a positive the per-sample term is -log(p); for a negative it is
-log(1 - max(0, p - m)), so a negative already below its margin contributes
exactly zero and receives zero gradient. Both log arguments are clamped from
below at clamp_eps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError


@dataclass
class LossConfig:
    l2_lambda: float = 1e-4
    clamp_eps: float = 1e-7

    def __post_init__(self):
        if self.l2_lambda < 0:
            raise ConfigError(f"l2_lambda must be >= 0, got {self.l2_lambda}")
        if not 0.0 < self.clamp_eps < 1e-3:
            raise ConfigError(f"clamp_eps must be in (0, 1e-3), got {self.clamp_eps}")


def margin_bce(p, y, m, clamp_eps=1e-7):
    """Scalar margin BCE over python/numpy sequences (float64)."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if not (p.shape == y.shape == m.shape) or p.ndim != 1 or p.size < 1:
        raise ShapeError(f"margin_bce needs equal-length 1-D inputs, got "
                         f"{p.shape}/{y.shape}/{m.shape}")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ShapeError("margin_bce: p values must lie in [0, 1]")
    pos = np.log(np.maximum(p, clamp_eps))
    hinge = np.maximum(0.0, p - m)
    neg = np.log(np.maximum(1.0 - hinge, clamp_eps))
    return float(-(y * pos + (1.0 - y) * neg).mean())


def margin_bce_graph(p, y, m, clamp_eps=1e-7):
    """In-graph margin BCE; `p` is a [N] tensor, y and m are constants."""
    n = p.shape[0]
    dtype = p.dtype
    y_t = T.constant(np.asarray(y), dtype=dtype)
    m_t = T.constant(np.asarray(m), dtype=dtype)
    one_minus_y = T.constant(1.0 - np.asarray(y, dtype=dtype))
    pos = T.log(T.maximum_scalar(p, clamp_eps))
    hinge = T.maximum_scalar(T.sub(p, m_t), 0.0)
    neg = T.log(T.maximum_scalar(T.add_scalar(T.scale(hinge, -1.0), 1.0), clamp_eps))
    terms = T.add(T.mul(y_t, pos), T.mul(one_minus_y, neg))
    return T.scale(T.sum_all(terms), -1.0 / n)


def l2_penalty(weight_arrays, l2_lambda):
    """lambda * sum of squared entries over the given weight arrays."""
    if l2_lambda == 0.0:
        return 0.0
    total = 0.0
    for w in weight_arrays:
        w = np.asarray(w, dtype=np.float64)
        total += float((w * w).sum())
    return l2_lambda * total


def l2_penalty_graph(weight_tensors, l2_lambda):
    """In-graph L2 penalty; returns None when the penalty is off."""
    if l2_lambda == 0.0 or not weight_tensors:
        return None
    acc = None
    for w in weight_tensors:
        sq = T.sum_all(T.mul(w, w))
        acc = sq if acc is None else T.add(acc, sq)
    return T.scale(acc, l2_lambda)


def total_loss(p, y, m, weight_tensors, config: LossConfig):
    """margin BCE plus L2 penalty as one differentiable scalar node.

    Biases and batchnorm affine parameters must be excluded from
    `weight_tensors` by the caller (SyncModel.weight_tensors does this).
    """
    loss = margin_bce_graph(p, y, m, clamp_eps=config.clamp_eps)
    pen = l2_penalty_graph(weight_tensors, config.l2_lambda)
    if pen is not None:
        loss = T.add(loss, pen)
    return loss
