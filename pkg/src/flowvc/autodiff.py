"""Minimal reverse-mode autodiff over float64 numpy arrays.

Define-by-run: every operation on Tensors with requires_grad records its
parents and a backward closure; backward() replays the tape in reverse
topological order. All data is double precision and validated finite at
construction (NaN/Inf anywhere is a contract violation and raises).

Tensors are treated as immutable after construction except for gradient
accumulation into .grad; a graph belongs to the thread that built it.
"""

import contextlib

import numpy as np

from . import kernels

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / oracles)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class NonFiniteError(ValueError):
    """Raised when NaN or Inf reaches a tensor; signals numeric blow-up."""


def _as_array(data):
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("non-finite value in tensor data")
    return arr


class Tensor:
    """float64 ndarray plus optional gradient buffer and tape links."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / float(other))

    def __rtruediv__(self, other):
        return mul(power(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    """Build a result tensor, recording the tape only when needed."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    """Reduce grad of a broadcast result back to an operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- arithmetic ----------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bwd)


def power(a, p):
    a = as_tensor(a)
    p = float(p)
    out = a.data**p

    def bwd(g):
        return (g * p * a.data ** (p - 1.0),)

    return _make(out, (a,), bwd)


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return _make(out, (a,), bwd)


def log(a):
    a = as_tensor(a)

    def bwd(g):
        return (g / a.data,)

    return _make(np.log(a.data), (a,), bwd)


def sqrt(a):
    return power(a, 0.5)


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), bwd)


def sigmoid(a):
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), bwd)


def relu(a):
    return leaky_relu(a, 0.0)


def leaky_relu(a, negative_slope=0.2):
    a = as_tensor(a)
    mask = a.data > 0

    def bwd(g):
        return (g * np.where(mask, 1.0, negative_slope),)

    return _make(np.where(mask, a.data, negative_slope * a.data), (a,), bwd)


def silu(a):
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = a.data * s

    def bwd(g):
        return (g * (s + out * (1.0 - s)),)

    return _make(out, (a,), bwd)


# -- reductions and shape ops ---------------------------------------------


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), bwd)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= a.shape[ax]
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)

    def bwd(g):
        return (g.reshape(a.shape),)

    return _make(a.data.reshape(shape), (a,), bwd)


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)

    def bwd(g):
        return (g.transpose(inv),)

    return _make(a.data.transpose(axes), (a,), bwd)


def take(a, key):
    """Basic slicing/indexing with gradient scatter-add."""
    a = as_tensor(a)
    out = a.data[key]

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, key, g)
        return (ga,)

    return _make(out, (a,), bwd)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)


def pad_axis(a, axis, before, after):
    """Zero-pad along one axis."""
    a = as_tensor(a)
    widths = [(0, 0)] * a.ndim
    widths[axis] = (before, after)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(before, before + a.shape[axis])
    sl = tuple(sl)

    def bwd(g):
        return (np.ascontiguousarray(g[sl]),)

    return _make(np.pad(a.data, widths), (a,), bwd)


def repeat_interleave(a, repeats, axis):
    """Repeat each element `repeats` times along an axis (nearest upsample)."""
    a = as_tensor(a)
    n = a.shape[axis]

    def bwd(g):
        shp = list(g.shape)
        shp[axis] = n
        shp.insert(axis + 1, repeats)
        return (g.reshape(shp).sum(axis=axis + 1),)

    return _make(np.repeat(a.data, repeats, axis=axis), (a,), bwd)


# -- linear algebra --------------------------------------------------------


def matmul(a, b):
    """Matrix product; supports stacked (batched) operands of equal batch shape."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires >=2-D operands")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ValueError("matmul batch dims must match exactly")

    def bwd(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return _make(a.data @ b.data, (a, b), bwd)


def softmax(a, axis=-1):
    """Numerically stable softmax; outputs positive, summing to 1 along axis."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), bwd)


def conv1d(x, w, bias=None, stride=1, padding=0):
    """1-D cross-correlation of x (C_in, T) with w (C_out, C_in, K).

    Output is (C_out, T') with T' = floor((T + 2*padding - K) / stride) + 1.
    No kernel flip (deep-learning convention).
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.ndim != 3:
        raise ValueError("conv1d expects x (C_in, T) and w (C_out, C_in, K)")
    if x.shape[0] != w.shape[1]:
        raise ValueError(f"conv1d channel mismatch: x {x.shape}, w {w.shape}")
    k, t = w.shape[2], x.shape[1]
    if k > t + 2 * padding:
        raise ValueError(f"kernel width {k} exceeds padded input length {t + 2 * padding}")
    xp = np.pad(x.data, ((0, 0), (padding, padding))) if padding else x.data
    xp = np.ascontiguousarray(xp)
    y = kernels.conv1d_forward(xp, w.data, stride)

    def bwd(g):
        g = np.ascontiguousarray(g)
        gw = kernels.conv1d_backward_w(xp, g, k, stride)
        gxp = kernels.conv1d_backward_x(w.data, g, xp.shape[1], stride)
        gx = gxp[:, padding : padding + t] if padding else gxp
        return np.ascontiguousarray(gx), gw

    out = _make(y, (x, w), bwd)
    if bias is not None:
        out = add(out, reshape(as_tensor(bias), (-1, 1)))
    return out


# -- backward pass ---------------------------------------------------------


def backward(loss):
    """Populate .grad on all reachable requires_grad leaves of the graph.

    Each graph node is visited exactly once. Parameters with no path to the
    loss are untouched (a prior zero_grad leaves them exactly zero).
    """
    if not isinstance(loss, Tensor):
        raise ValueError("backward expects a Tensor")
    if loss.size != 1:
        raise ValueError("backward requires a scalar loss")
    if not loss.requires_grad:
        return

    topo, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, gp in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or gp is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + gp
            else:
                grads[key] = gp


def zero_grad(params):
    """Reset gradient buffers to exact zeros."""
    for p in params:
        p.zero_grad()
