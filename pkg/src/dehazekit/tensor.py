"""Minimal reverse-mode autodiff over numpy arrays.

A :class:`Tensor` wraps an ndarray plus the closure that pushes its gradient
to its parents. Only the operations the dehazing network needs are here;
each one checks its output for non-finite values so a blow-up is reported at
the op that caused it rather than at the loss.

MAC accounting: inside ``with count_macs() as c:`` every convolution,
matrix product and tensor-by-tensor elementwise product adds its
multiply-accumulate count to ``c``.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import kernels
from .errors import NumericError, ShapeError

FLOPS_PER_MAC = 1  # one multiply-accumulate is reported as one FLOP


# ---------------------------------------------------------------- MAC tracing

@dataclass
class MacCounter:
    total: int = 0
    by_op: dict = field(default_factory=dict)

    def add(self, op: str, n: int):
        self.total += int(n)
        self.by_op[op] = self.by_op.get(op, 0) + int(n)


_counters: list[MacCounter] = []


@contextlib.contextmanager
def count_macs():
    c = MacCounter()
    _counters.append(c)
    try:
        yield c
    finally:
        _counters.remove(c)


def _macs(op, n):
    for c in _counters:
        c.add(op, n)


# ---------------------------------------------------------------- core node

class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), op="leaf"):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = None
        self.op = op

    shape = property(lambda self: self.data.shape)
    ndim = property(lambda self: self.data.ndim)
    dtype = property(lambda self: self.data.dtype)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topo(self)
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.asarray(grad, dtype=self.data.dtype).reshape(self.shape).copy()
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    # operator sugar
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __neg__(self): return mul(self, -1.0)
    def __matmul__(self, o): return matmul(self, o)


def _topo(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x, like=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data, parents, op, backward=None):
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by {op}")
    out = Tensor(data, _parents=tuple(parents), op=op)
    if out.requires_grad and backward is not None:
        out._backward = lambda: backward(out.grad)
    return out


def _acc(t: Tensor, g):
    if t.requires_grad:
        t.grad += g.astype(t.data.dtype, copy=False)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data + b.data

    def bw(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(g, b.shape))
    return _result(out, (a, b), "add", bw)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data - b.data

    def bw(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, -_unbroadcast(g, b.shape))
    return _result(out, (a, b), "sub", bw)


def mul(a, b) -> Tensor:
    hadamard = isinstance(a, Tensor) and isinstance(b, Tensor)
    a, b = _pair(a, b)
    out = a.data * b.data
    if hadamard:
        _macs("mul", out.size)

    def bw(g):
        _acc(a, _unbroadcast(g * b.data, a.shape))
        _acc(b, _unbroadcast(g * a.data, b.shape))
    return _result(out, (a, b), "mul", bw)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data  # non-finite results raise NumericError below

    def bw(g):
        _acc(a, _unbroadcast(g / b.data, a.shape))
        _acc(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
    return _result(out, (a, b), "div", bw)


def _pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not isinstance(a, Tensor):
        a, b = as_tensor(a), as_tensor(b)
    return a, b


def square(x: Tensor) -> Tensor:
    out = x.data * x.data
    return _result(out, (x,), "square", lambda g: _acc(x, 2.0 * g * x.data))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return _result(out, (x,), "sqrt", lambda g: _acc(x, g * 0.5 / out))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)
    _macs("matmul", out.size * a.shape[-1])

    def bw(g):
        _acc(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        _acc(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))
    return _result(out, (a, b), "matmul", bw)


# ---------------------------------------------------------------- shape ops

def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    return _result(out, (x,), "reshape", lambda g: _acc(x, g.reshape(x.shape)))


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(x.data.transpose(axes))
    return _result(out, (x,), "permute", lambda g: _acc(x, g.transpose(inv)))


def concat(xs, axis=1) -> Tensor:
    xs = list(xs)
    out = np.concatenate([t.data for t in xs], axis=axis)
    edges = np.cumsum([0] + [t.shape[axis] for t in xs])

    def bw(g):
        for t, lo, hi in zip(xs, edges[:-1], edges[1:]):
            if t.requires_grad:
                _acc(t, np.take(g, np.arange(lo, hi), axis=axis))
    return _result(out, xs, "concat", bw)


def split(x: Tensor, parts: int, axis=1) -> list[Tensor]:
    n = x.shape[axis]
    if n % parts:
        raise ShapeError(f"cannot split axis of size {n} into {parts} equal parts")
    step = n // parts
    return [narrow(x, axis, i * step, step) for i in range(parts)]


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = x.data[idx].copy()

    def bw(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        _acc(x, full)
    return _result(out, (x,), "narrow", bw)


# ---------------------------------------------------------------- convolution

def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=1, padding=0, groups=1) -> Tensor:
    """2-D cross-correlation on NCHW input with OIHW weights."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and weight")
    bn, cin, h, wd = x.shape
    cout, cig, kh, kw = w.shape
    if kh != kw:
        raise ShapeError("only square kernels are supported")
    if cin % groups or cout % groups or cin // groups != cig:
        raise ShapeError(f"channel/group mismatch: in={cin} out={cout} groups={groups} weight={w.shape}")
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ShapeError(f"kernel {kh} larger than padded input {h}x{wd}")
    dtype = np.result_type(x.data, w.data)
    y = kernels.conv2d_forward(x.data, w.data, stride, padding, groups)
    if b is not None:
        y += b.data.reshape(1, -1, 1, 1)
    y = y.astype(dtype)
    _macs("conv2d", bn * cout * cig * kh * kw * y.shape[2] * y.shape[3])
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        if x.requires_grad or w.requires_grad:
            gx, gw = kernels.conv2d_backward(x.data, w.data, g, stride, padding, groups)
            _acc(x, gx)
            _acc(w, gw)
        if b is not None:
            _acc(b, g.sum(axis=(0, 2, 3)))
    return _result(y, parents, "conv2d", bw)


# ---------------------------------------------------------------- resampling

def resize_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Linear interpolation weights, half-pixel centres, edge clamped."""
    m = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Resize the last two axes to (out_h, out_w)."""
    oh, ow = int(out_h), int(out_w)
    if oh < 1 or ow < 1:
        raise ShapeError(f"resize target must be at least 1x1, got {oh}x{ow}")
    ih, iw = x.shape[-2:]
    if (oh, ow) == (ih, iw):
        return x
    ry = resize_matrix(oh, ih).astype(x.dtype)
    rx = resize_matrix(ow, iw).astype(x.dtype)
    out = ry @ x.data @ rx.T
    return _result(out, (x,), "resize", lambda g: _acc(x, ry.T @ g @ rx))


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    b, c, h, w = x.shape
    if c % (r * r):
        raise ShapeError(f"pixel_shuffle needs channels divisible by {r * r}, got {c}")
    co = c // (r * r)
    out = x.data.reshape(b, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(b, co, h * r, w * r)

    def bw(g):
        _acc(x, g.reshape(b, co, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(b, c, h, w))
    return _result(out, (x,), "pixel_shuffle", bw)


# ---------------------------------------------------------------- normalisation

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps=1e-5) -> Tensor:
    """Normalise over the channel axis at each spatial position."""
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    xhat = xc * inv
    shp = (1, -1) + (1,) * (x.ndim - 2)
    out = gamma.data.reshape(shp) * xhat + beta.data.reshape(shp)

    def bw(g):
        red = (0,) + tuple(range(2, x.ndim))
        _acc(gamma, (g * xhat).sum(axis=red).reshape(gamma.shape))
        _acc(beta, g.sum(axis=red).reshape(beta.shape))
        if x.requires_grad:
            dxh = g * gamma.data.reshape(shp)
            dx = inv * (dxh - dxh.mean(axis=1, keepdims=True)
                        - xhat * (dxh * xhat).mean(axis=1, keepdims=True))
            _acc(x, dx)
    return _result(out, (x, gamma, beta), "layer_norm", bw)


def l2_normalize(x: Tensor, axis=-1, eps=1e-12) -> Tensor:
    n = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    d = np.maximum(n, eps)
    y = x.data / d

    def bw(g):
        # the clamp region behaves like division by a constant
        proj = (g * y).sum(axis=axis, keepdims=True)
        active = n > eps
        _acc(x, np.where(active, (g - y * proj) / d, g / d))
    return _result(y, (x,), "l2_normalize", bw)


def softmax(x: Tensor, axis=-1, scale=1.0) -> Tensor:
    z = x.data * scale
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        _acc(x, scale * s * (g - (g * s).sum(axis=axis, keepdims=True)))
    return _result(s, (x,), "softmax", bw)


# ---------------------------------------------------------------- activations

def gelu(x: Tensor) -> Tensor:
    v = x.data
    cdf = 0.5 * (1.0 + erf(v / np.sqrt(2.0)))
    out = v * cdf

    def bw(g):
        pdf = np.exp(-0.5 * v * v) / np.sqrt(2.0 * np.pi)
        _acc(x, g * (cdf + v * pdf))
    return _result(out, (x,), "gelu", bw)


def sigmoid(x: Tensor) -> Tensor:
    v = x.data
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return _result(out, (x,), "sigmoid", lambda g: _acc(x, g * out * (1.0 - out)))


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return _result(out, (x,), "relu", lambda g: _acc(x, g * (x.data > 0)))


def clamp(x: Tensor, lo=0.0, hi=1.0) -> Tensor:
    out = np.clip(x.data, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)
    return _result(out, (x,), "clamp", lambda g: _acc(x, g * inside))


# ---------------------------------------------------------------- reductions

def _axes(x, axis):
    if axis is None:
        return tuple(range(x.ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % x.ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    ax = _axes(x, axis)
    out = x.data.sum(axis=ax, keepdims=keepdims)

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, ax)
        _acc(x, np.broadcast_to(gk, x.shape))
    return _result(np.asarray(out), (x,), "sum", bw)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    ax = _axes(x, axis)
    n = int(np.prod([x.shape[a] for a in ax]))
    out = x.data.mean(axis=ax, keepdims=keepdims)

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, ax)
        _acc(x, np.broadcast_to(gk / n, x.shape))
    return _result(np.asarray(out), (x,), "mean", bw)


def max(x: Tensor, axis: int, keepdims=False) -> Tensor:  # noqa: A001
    """Max over one axis; the gradient goes to the first maximal entry."""
    axis = axis % x.ndim
    idx = np.expand_dims(x.data.argmax(axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis)

    def bw(g):
        full = np.zeros_like(x.data)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(full, idx, gk, axis=axis)
        _acc(x, full)
    return _result(out if keepdims else out.squeeze(axis), (x,), "max", bw)
