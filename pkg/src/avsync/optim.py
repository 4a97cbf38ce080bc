"""Adam with bias correction over named parameter dicts.

Moment buffers are stored in float32 so a checkpoint round-trip is exact,
but each update is computed in float64 before being written back.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError


class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.5, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        if lr <= 0:
            raise ConfigError(f"lr must be > 0, got {lr}")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        """Apply one Adam update from the gradients currently on the params."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            if p.grad.shape != p.data.shape:
                raise ShapeError(f"grad shape {p.grad.shape} != param shape {p.data.shape} for {name}")
            g = p.grad.astype(np.float64)
            if self.weight_decay != 0.0:
                g = g + self.weight_decay * p.data.astype(np.float64)
            m = self.beta1 * self.m[name].astype(np.float64) + (1.0 - self.beta1) * g
            v = self.beta2 * self.v[name].astype(np.float64) + (1.0 - self.beta2) * g * g
            self.m[name] = m.astype(self.m[name].dtype)
            self.v[name] = v.astype(self.v[name].dtype)
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= update.astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self):
        """Moment buffers keyed for serialization, insertion-ordered."""
        out = {}
        for name in self.params:
            out[f"m.{name}"] = self.m[name]
            out[f"v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays, step_count):
        for name in self.params:
            mk, vk = f"m.{name}", f"v.{name}"
            if mk not in arrays or vk not in arrays:
                raise ShapeError(f"optimizer state missing moments for {name}")
            if arrays[mk].shape != self.params[name].data.shape:
                raise ShapeError(f"optimizer moment shape mismatch for {name}")
            self.m[name] = arrays[mk].copy()
            self.v[name] = arrays[vk].copy()
        self.step_count = int(step_count)
