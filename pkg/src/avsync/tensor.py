"""Dense tensors with reverse-mode autodiff, restricted to the encoder op set.

Storage is float32; passing float64 arrays switches a whole graph to a
float64 shadow evaluation (used by gradient-check tests). There is no
broadcasting: every binary op requires identical shapes, and layer ops
(conv2d, batchnorm2d, linear) handle their own parameter shapes internally.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

_FLOAT_TYPES = (np.float32, np.float64)


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype in _FLOAT_TYPES:
        return arr
    return arr.astype(np.float32)


class Tensor:
    """A node in the computation graph.

    `op` names the operation that produced the node ("leaf" for inputs and
    parameters) and `inputs` are the parent nodes, so the linked tensors form
    the acyclic op graph that `backward` walks.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "inputs", "_backward")

    def __init__(self, data, requires_grad=False, op="leaf", inputs=()):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self.inputs = tuple(inputs)
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, dtype={self.data.dtype})"


_grad_enabled = True


class no_grad:
    """Disable graph recording inside a `with` block (used for eval paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def parameter(data):
    return Tensor(data, requires_grad=True)


def constant(data, dtype=None):
    return Tensor(_as_array(data, dtype))


def _node(out_data, inputs, op, backward_fn):
    track = _grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track, op=op, inputs=inputs if track else ())
    if track:
        out._backward = backward_fn
    return out


def _check_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------------------
# elementwise / reduction ops

def add(a, b):
    _check_same_shape(a, b, "add")

    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad)
        if b.requires_grad:
            b.accumulate_grad(out.grad)

    return _node(a.data + b.data, (a, b), "add", bw)


def sub(a, b):
    _check_same_shape(a, b, "sub")

    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad)
        if b.requires_grad:
            b.accumulate_grad(-out.grad)

    return _node(a.data - b.data, (a, b), "sub", bw)


def mul(a, b):
    _check_same_shape(a, b, "mul")

    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad * b.data)
        if b.requires_grad:
            b.accumulate_grad(out.grad * a.data)

    return _node(a.data * b.data, (a, b), "mul", bw)


def div(a, b):
    _check_same_shape(a, b, "div")

    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad / b.data)
        if b.requires_grad:
            b.accumulate_grad(-out.grad * a.data / (b.data * b.data))

    return _node(a.data / b.data, (a, b), "div", bw)


def scale(a, c):
    c = float(c)

    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad * c)

    return _node(a.data * c, (a,), "scale", bw)


def add_scalar(a, c):
    c = float(c)

    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad)

    return _node(a.data + c, (a,), "add_scalar", bw)


def relu(a):
    mask = a.data > 0

    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad * mask)

    return _node(np.where(mask, a.data, 0), (a,), "relu", bw)


def maximum_scalar(a, c):
    """max(a, c) elementwise; subgradient 0 on the clamped side and at ties."""
    c = float(c)
    mask = a.data > c

    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad * mask)

    return _node(np.where(mask, a.data, c), (a,), "maximum_scalar", bw)


def minimum_scalar(a, c):
    c = float(c)
    mask = a.data < c

    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad * mask)

    return _node(np.where(mask, a.data, c), (a,), "minimum_scalar", bw)


def log(a):
    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad / a.data)

    return _node(np.log(a.data), (a,), "log", bw)


def sum_all(a):
    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(np.full_like(a.data, out.grad))

    return _node(a.data.sum(dtype=a.data.dtype), (a,), "sum_all", bw)


def sum_rows(a):
    """[N, D] -> [N]: sum over the last axis."""
    if a.data.ndim != 2:
        raise ShapeError(f"sum_rows expects 2-D input, got {a.data.shape}")

    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(np.repeat(out.grad[:, None], a.data.shape[1], axis=1))

    return _node(a.data.sum(axis=1), (a,), "sum_rows", bw)


def l2norm_rows(a, tiny=1e-20):
    """[N, D] -> [N] Euclidean row norms, derivative 0 at the zero row."""
    if a.data.ndim != 2:
        raise ShapeError(f"l2norm_rows expects 2-D input, got {a.data.shape}")
    norms = np.sqrt((a.data * a.data).sum(axis=1))

    def bw(out):
        if a.requires_grad:
            denom = np.maximum(norms, tiny)
            a.accumulate_grad((out.grad / denom)[:, None] * a.data)

    return _node(norms, (a,), "l2norm_rows", bw)


def reshape(a, shape):
    shape = tuple(int(s) for s in shape)

    def bw(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), "reshape", bw)


# ---------------------------------------------------------------------------
# layer ops

def conv2d(x, w, b, stride=(1, 1), padding=(0, 0)):
    """Cross-correlation of NCHW input with OIHW kernels plus per-channel bias.

    Implemented as one GEMM per kernel position, which keeps memory flat and
    the reduction order fixed (deterministic).
    """
    n, cin, h, wd = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input channels {cin} != weight channels {cin_w}")
    if b.data.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {b.data.shape} != ({cout},)")
    sh, sw = (int(stride[0]), int(stride[1]))
    ph, pw = (int(padding[0]), int(padding[1]))
    if sh < 1 or sw < 1:
        raise ShapeError("conv2d: stride must be >= 1")
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wd + 2 * pw - kw) // sw + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} does not fit padded input {h}x{wd}")

    if ph or pw:
        xp = np.zeros((n, cin, h + 2 * ph, wd + 2 * pw), dtype=x.data.dtype)
        xp[:, :, ph:ph + h, pw:pw + wd] = x.data
    else:
        xp = x.data

    out_data = np.empty((n, cout, oh, ow), dtype=x.data.dtype)
    out_data[:] = b.data[None, :, None, None]
    for ky in range(kh):
        for kx in range(kw):
            xs = xp[:, :, ky:ky + sh * oh:sh, kx:kx + sw * ow:sw]
            # [cout, cin] x [n, cin, oh, ow] -> [cout, n, oh, ow]
            out_data += np.tensordot(w.data[:, :, ky, kx], xs, axes=([1], [1])).transpose(1, 0, 2, 3)

    def bw(out):
        g = out.grad
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=(0, 2, 3)))
        need_dx = x.requires_grad
        dxp = np.zeros_like(xp) if need_dx else None
        for ky in range(kh):
            for kx in range(kw):
                xs = xp[:, :, ky:ky + sh * oh:sh, kx:kx + sw * ow:sw]
                if w.requires_grad:
                    if w.grad is None:
                        w.grad = np.zeros_like(w.data)
                    # [n, cout, oh, ow] x [n, cin, oh, ow] summed over n, oh, ow
                    w.grad[:, :, ky, kx] += np.tensordot(g, xs, axes=([0, 2, 3], [0, 2, 3]))
                if need_dx:
                    # [cout, cin] applied to grad: [n, cin, oh, ow]
                    dxs = np.tensordot(g, w.data[:, :, ky, kx], axes=([1], [0])).transpose(0, 3, 1, 2)
                    dxp[:, :, ky:ky + sh * oh:sh, kx:kx + sw * ow:sw] += dxs
        if need_dx:
            if ph or pw:
                x.accumulate_grad(dxp[:, :, ph:ph + h, pw:pw + wd])
            else:
                x.accumulate_grad(dxp)

    return _node(out_data, (x, w, b), "conv2d", bw)


def linear(x, w, b):
    """[N, Din] x [Dout, Din] + [Dout] -> [N, Dout]."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ShapeError("linear expects 2-D input and weight")
    n, din = x.data.shape
    dout, din_w = w.data.shape
    if din != din_w:
        raise ShapeError(f"linear: input dim {din} != weight dim {din_w}")
    if b.data.shape != (dout,):
        raise ShapeError(f"linear: bias shape {b.data.shape} != ({dout},)")

    def bw(out):
        g = out.grad
        if x.requires_grad:
            x.accumulate_grad(g @ w.data)
        if w.requires_grad:
            w.accumulate_grad(g.T @ x.data)
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0))

    return _node(x.data @ w.data.T + b.data, (x, w, b), "linear", bw)


def adaptive_avg_pool2d(x, out_h, out_w):
    """Average over regions [floor(i*H/oh), ceil((i+1)*H/oh)) per output cell."""
    out_h, out_w = int(out_h), int(out_w)
    if out_h < 1 or out_w < 1:
        raise ShapeError("adaptive_avg_pool2d: output size must be >= 1")
    n, c, h, w = x.data.shape
    ys = [((i * h) // out_h, -(-((i + 1) * h) // out_h)) for i in range(out_h)]
    xs = [((j * w) // out_w, -(-((j + 1) * w) // out_w)) for j in range(out_w)]
    out_data = np.empty((n, c, out_h, out_w), dtype=x.data.dtype)
    for i, (y0, y1) in enumerate(ys):
        for j, (x0, x1) in enumerate(xs):
            out_data[:, :, i, j] = x.data[:, :, y0:y1, x0:x1].mean(axis=(2, 3), dtype=x.data.dtype)

    def bw(out):
        if not x.requires_grad:
            return
        dx = np.zeros_like(x.data)
        for i, (y0, y1) in enumerate(ys):
            for j, (x0, x1) in enumerate(xs):
                area = (y1 - y0) * (x1 - x0)
                dx[:, :, y0:y1, x0:x1] += (out.grad[:, :, i, j] / area)[:, :, None, None]
        x.accumulate_grad(dx)

    return _node(out_data, (x,), "adaptive_avg_pool2d", bw)


class BatchNormState:
    """Running statistics for one batchnorm layer.

    Starts initialized to mean 0 / var 1, so eval mode is valid before any
    training update.
    """

    def __init__(self, channels, dtype=np.float32):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def copy(self):
        out = BatchNormState(len(self.running_mean), dtype=self.running_mean.dtype)
        out.running_mean = self.running_mean.copy()
        out.running_var = self.running_var.copy()
        return out


def batchnorm2d(x, gamma, beta, state, train, eps=1e-5, momentum=0.1):
    """Per-channel normalization over (N, H, W).

    Train mode normalizes with biased batch statistics and updates `state`
    in place (running stats use the unbiased variance). Eval mode normalizes
    with the running statistics and leaves `state` untouched.
    """
    n, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"batchnorm2d: affine params must have shape ({c},)")
    count = n * h * w
    if train and count < 2:
        raise ShapeError("batchnorm2d: train mode needs at least 2 values per channel")

    if train:
        mean = x.data.mean(axis=(0, 2, 3), dtype=x.data.dtype)
        var = x.data.var(axis=(0, 2, 3), dtype=x.data.dtype)
        unbiased = var * (count / (count - 1))
        rdtype = state.running_mean.dtype
        state.running_mean = ((1.0 - momentum) * state.running_mean
                              + momentum * mean.astype(rdtype))
        state.running_var = ((1.0 - momentum) * state.running_var
                             + momentum * unbiased.astype(rdtype))
    else:
        mean = state.running_mean.astype(x.data.dtype)
        var = state.running_var.astype(x.data.dtype)

    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out_data = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def bw(out):
        g = out.grad
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=(0, 2, 3)))
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=(0, 2, 3)))
        if not x.requires_grad:
            return
        gs = gamma.data[None, :, None, None] * inv_std[None, :, None, None]
        if train:
            dxhat = g * gamma.data[None, :, None, None]
            m1 = dxhat.mean(axis=(0, 2, 3), dtype=x.data.dtype)[None, :, None, None]
            m2 = (dxhat * xhat).mean(axis=(0, 2, 3), dtype=x.data.dtype)[None, :, None, None]
            dx = (dxhat - m1 - xhat * m2) * inv_std[None, :, None, None]
            x.accumulate_grad(dx)
        else:
            x.accumulate_grad(g * gs)

    return _node(out_data, (x, gamma, beta), "batchnorm2d", bw)


# ---------------------------------------------------------------------------
# backward pass

def topo_order(root):
    """Inputs-before-outputs ordering of the graph below `root` (iterative)."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.inputs:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss):
    """Populate `.grad` on every tensor that contributed to a scalar loss."""
    if loss.data.shape != ():
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    loss.grad = np.asarray(1.0, dtype=loss.data.dtype)
    for node in reversed(topo_order(loss)):
        if node._backward is not None and node.grad is not None:
            node._backward(node)


def zero_grads(tensors):
    for t in tensors:
        t.zero_grad()
