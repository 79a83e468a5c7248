"""Minimal dense tensor library with reverse-mode automatic differentiation.

Tensors store float32 data by default (float64 supported for high-precision
gradient checking); reductions accumulate in float64. Operations record a
tape of backward closures; ``backward(loss)`` walks it once in reverse
topological order and then clears it.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "ShapeMismatchError",
    "IndexOutOfRangeError",
    "InvalidProbabilityError",
    "LabelOutOfRangeError",
    "NotScalarError",
    "no_grad",
    "add",
    "sub",
    "mul",
    "matmul",
    "reshape",
    "transpose",
    "tensor_sum",
    "tensor_mean",
    "tanh",
    "gelu",
    "softmax",
    "layer_norm",
    "dropout",
    "embedding_lookup",
    "index_select",
    "cross_entropy",
    "softmax_cross_entropy",
    "backward",
    "finite_diff_check",
]


class ShapeMismatchError(ValueError):
    pass


class IndexOutOfRangeError(IndexError):
    pass


class InvalidProbabilityError(ValueError):
    pass


class LabelOutOfRangeError(ValueError):
    pass


class NotScalarError(ValueError):
    pass


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense multi-dimensional float array participating in autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    def mean(self, axis=None):
        return tensor_mean(self, axis)


def _as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _make(data, parents, backward_fn):
    """Create a result tensor, recording the backward closure if needed."""
    out = Tensor(data, dtype=data.dtype if data.dtype in (np.float32, np.float64) else None)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.data.dtype)
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), bw)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data - b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), bw)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), bw)


def matmul(a, b):
    """Matrix product; leading dimensions broadcast as in numpy."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 1 or b.data.ndim < 1 or a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeMismatchError(f"matmul: {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def bw(g):
        if b.data.ndim == 1:
            # (..., m, k) @ (k,) -> (..., m)
            ga = g[..., None] * b.data if a.data.ndim > 1 else g * b.data
            gb = np.swapaxes(a.data, -1, -2) @ g if a.data.ndim > 1 else a.data * g
            while gb.ndim > 1:
                gb = gb.sum(axis=0)
            _accumulate(a, _unbroadcast(np.asarray(ga), a.data.shape))
            _accumulate(b, np.asarray(gb))
            return
        if a.data.ndim == 1:
            # (k,) @ (..., k, n) -> (..., n)
            ga = (b.data * g[..., None, :]).sum(axis=-1)
            while ga.ndim > 1:
                ga = ga.sum(axis=0)
            gb = a.data[:, None] * g[..., None, :]
            _accumulate(a, ga)
            _accumulate(b, _unbroadcast(gb, b.data.shape))
            return
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accumulate(a, _unbroadcast(ga, a.data.shape))
        _accumulate(b, _unbroadcast(gb, b.data.shape))

    return _make(out_data, (a, b), bw)


def reshape(a, shape):
    a = _as_tensor(a)
    out_data = a.data.reshape(shape)
    old_shape = a.data.shape

    def bw(g):
        _accumulate(a, g.reshape(old_shape))

    return _make(out_data, (a,), bw)


def transpose(a, axes=None):
    a = _as_tensor(a)
    out_data = np.transpose(a.data, axes)
    if axes is None:
        inv = None
    else:
        inv = np.argsort(axes)

    def bw(g):
        _accumulate(a, np.transpose(g, inv))

    return _make(out_data, (a,), bw)


def tensor_sum(a, axis=None):
    a = _as_tensor(a)
    out_data = a.data.sum(axis=axis, dtype=np.float64).astype(a.data.dtype)

    def bw(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape))

    return _make(out_data, (a,), bw)


def tensor_mean(a, axis=None):
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    out_data = (a.data.sum(axis=axis, dtype=np.float64) / n).astype(a.data.dtype)

    def bw(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g / n, a.data.shape))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g / n, axis), a.data.shape))

    return _make(out_data, (a,), bw)


def tanh(a):
    a = _as_tensor(a)
    out_data = np.tanh(a.data)

    def bw(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), bw)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a):
    """Pointwise GELU, tanh approximation."""
    a = _as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out_data = (0.5 * x * (1.0 + t)).astype(x.dtype)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        _accumulate(a, g * d)

    return _make(out_data, (a,), bw)


def softmax(z):
    """Row softmax over the last axis, computed with max-subtraction."""
    z = _as_tensor(z)
    x = z.data.astype(np.float64)
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    y64 = e / e.sum(axis=-1, keepdims=True)
    out_data = y64.astype(z.data.dtype)

    def bw(g):
        g = g.astype(np.float64)
        dz = y64 * (g - (g * y64).sum(axis=-1, keepdims=True))
        _accumulate(z, dz)

    return _make(out_data, (z,), bw)


def layer_norm(x, gain, bias, eps=1e-12):
    """Zero-mean unit-variance normalization over the last axis, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    h = x.data.shape[-1]
    if gain.data.shape != (h,) or bias.data.shape != (h,):
        raise ShapeMismatchError(
            f"layer_norm: x last dim {h}, gain {gain.data.shape}, bias {bias.data.shape}"
        )
    xd = x.data.astype(np.float64)
    mu = xd.mean(axis=-1, keepdims=True)
    var = ((xd - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    out_data = (xhat * gain.data + bias.data).astype(x.data.dtype)

    def bw(g):
        g64 = g.astype(np.float64)
        dxhat = g64 * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        _accumulate(x, dx)
        reduce_axes = tuple(range(g.ndim - 1))
        _accumulate(gain, (g64 * xhat).sum(axis=reduce_axes))
        _accumulate(bias, g64.sum(axis=reduce_axes))

    return _make(out_data, (x, gain, bias), bw)


def dropout(x, p, training, rng=None):
    """Inverted dropout: train-time survivors scaled by 1/(1-p); inference identity."""
    x = _as_tensor(x)
    if not (0.0 <= p < 1.0):
        raise InvalidProbabilityError(f"dropout probability {p} outside [0, 1)")
    if not training or p == 0.0:
        out_data = x.data

        def bw_id(g):
            _accumulate(x, g)

        return _make(out_data, (x,), bw_id)
    if rng is None:
        raise ValueError("dropout in training mode requires an rng")
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype)
    scale = 1.0 / (1.0 - p)
    out_data = x.data * keep * scale

    def bw(g):
        _accumulate(x, g * keep * scale)

    return _make(out_data, (x,), bw)


def embedding_lookup(table, ids):
    """Gather rows of a (V, H) table by an integer id array of any shape."""
    table = _as_tensor(table)
    ids = np.asarray(ids)
    v = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise IndexOutOfRangeError(f"ids outside [0, {v})")
    out_data = table.data[ids]

    def bw(g):
        if not table.requires_grad:
            return
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[1]))
        _accumulate(table, gt)

    return _make(out_data, (table,), bw)


def index_select(x, axis, indices):
    """Take slices along an axis; gradient scatters (with accumulation) back."""
    x = _as_tensor(x)
    indices = np.asarray(indices)
    n = x.data.shape[axis]
    if indices.size and (indices.min() < -n or indices.max() >= n):
        raise IndexOutOfRangeError(f"indices outside [0, {n}) on axis {axis}")
    out_data = np.take(x.data, indices, axis=axis)

    def bw(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        moved = np.moveaxis(gx, axis, 0)
        np.add.at(moved, indices % n, np.moveaxis(g, axis, 0))
        _accumulate(x, gx)

    return _make(out_data, (x,), bw)


def cross_entropy(probs, labels):
    """Mean negative log probability of the true class.

    ``probs`` rows must already sum to 1 (e.g. softmax output). For training,
    prefer :func:`softmax_cross_entropy`, which fuses the two for stability.
    """
    probs = _as_tensor(probs)
    labels = np.asarray(labels)
    n, k = probs.data.shape
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRangeError(f"labels outside [0, {k})")
    picked = probs.data[np.arange(n), labels]
    out_data = np.asarray(-np.log(np.maximum(picked, 1e-30)).mean(), dtype=probs.data.dtype)

    def bw(g):
        gp = np.zeros_like(probs.data)
        gp[np.arange(n), labels] = -1.0 / (np.maximum(picked, 1e-30) * n)
        _accumulate(probs, g * gp)

    return _make(out_data, (probs,), bw)


def softmax_cross_entropy(logits, labels):
    """Fused softmax + cross-entropy; gradient is (probs - onehot) / n."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels)
    n, k = logits.data.shape
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRangeError(f"labels outside [0, {k})")
    x = logits.data.astype(np.float64)
    m = x.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
    logp = x - lse
    out_data = np.asarray(-logp[np.arange(n), labels].mean(), dtype=logits.data.dtype)
    probs = np.exp(logp)

    def bw(g):
        gl = probs.copy()
        gl[np.arange(n), labels] -= 1.0
        _accumulate(logits, g * gl / n)

    return _make(out_data, (logits,), bw)


class Tape:
    """Topologically ordered record of the operations reaching one output."""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out):
        order = []
        seen = set()
        stack = [(out, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)


def backward(loss):
    """Populate ``grad`` on every requires-grad tensor reaching ``loss``.

    The tape is cleared afterwards; a second backward on the same graph is an
    error by construction (no recorded closures remain).
    """
    if loss.data.size != 1:
        raise NotScalarError(f"backward needs a scalar, got shape {loss.data.shape}")
    tape = Tape.from_output(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in tape.nodes:
        node._parents = ()
        node._backward = None


def finite_diff_check(f, x, epsilon=None, indices=None):
    """Max relative error between autodiff and central finite differences.

    ``f`` maps a Tensor to a scalar Tensor. ``indices`` optionally restricts
    the check to a sample of flat coordinates (for large tensors).
    """
    base = x.data.copy()
    probe = Tensor(base.copy(), requires_grad=True, dtype=base.dtype)
    out = f(probe)
    if out.data.size != 1:
        raise NotScalarError("finite_diff_check needs a scalar-valued function")
    backward(out)
    g_ad = probe.grad if probe.grad is not None else np.zeros_like(base)

    if indices is None:
        indices = range(base.size)
    flat = base.reshape(-1)
    worst = 0.0
    for i in indices:
        if epsilon is None:
            eps = (1e-5 if base.dtype == np.float64 else 1e-2) * max(1.0, abs(float(flat[i])))
        else:
            eps = epsilon
        for sign, store in ((1.0, "hi"), (-1.0, "lo")):
            pert = flat.copy()
            pert[i] += sign * eps
            with no_grad():
                val = f(Tensor(pert.reshape(base.shape), dtype=base.dtype)).data
            if store == "hi":
                hi = float(val)
            else:
                lo = float(val)
        g_fd = (hi - lo) / (2.0 * eps)
        g_a = float(g_ad.reshape(-1)[i])
        err = abs(g_a - g_fd) / max(abs(g_a), abs(g_fd), 1.0)
        if err > worst:
            worst = err
    return worst
