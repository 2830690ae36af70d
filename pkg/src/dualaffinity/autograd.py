"""A small reverse-mode autodiff over numpy arrays.

Only the operations the toy multi-task network needs are provided. Each op
builds a `Var` that remembers its parents and a closure that pushes the
output gradient back to them.
"""
import numpy as np

from . import tensor as T


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn")

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    @property
    def T(self):
        return transpose(self)


def lift(x):
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = lift(a), lift(b)

    def bw(out):
        a.accumulate(_unbroadcast(out.grad, a.shape))
        b.accumulate(_unbroadcast(out.grad, b.shape))
    return Var(a.value + b.value, (a, b), bw)


def mul(a, b):
    a, b = lift(a), lift(b)

    def bw(out):
        a.accumulate(_unbroadcast(out.grad * b.value, a.shape))
        b.accumulate(_unbroadcast(out.grad * a.value, b.shape))
    return Var(a.value * b.value, (a, b), bw)


def div(a, b):
    a, b = lift(a), lift(b)
    val = a.value / b.value

    def bw(out):
        a.accumulate(_unbroadcast(out.grad / b.value, a.shape))
        b.accumulate(_unbroadcast(-out.grad * val / b.value, b.shape))
    return Var(val, (a, b), bw)


def matmul(a, b):
    a, b = lift(a), lift(b)

    def bw(out):
        g = out.grad
        if a.value.ndim == 1:
            a.accumulate(b.value @ g if b.value.ndim == 2 else g * b.value)
        else:
            a.accumulate(np.outer(g, b.value) if b.value.ndim == 1 else g @ b.value.T)
        if b.value.ndim == 1:
            b.accumulate(a.value.T @ g)
        else:
            b.accumulate(np.outer(a.value, g) if a.value.ndim == 1 else a.value.T @ g)
    return Var(a.value @ b.value, (a, b), bw)


def reshape(a, shape):
    def bw(out):
        a.accumulate(out.grad.reshape(a.shape))
    return Var(a.value.reshape(shape), (a,), bw)


def transpose(a):
    def bw(out):
        a.accumulate(out.grad.T)
    return Var(a.value.T, (a,), bw)


def take(a, idx):
    def bw(out):
        g = np.zeros_like(a.value)
        g[idx] += out.grad
        a.accumulate(g)
    return Var(a.value[idx], (a,), bw)


def stack(vars_):
    vars_ = [lift(v) for v in vars_]

    def bw(out):
        for i, v in enumerate(vars_):
            v.accumulate(out.grad[i])
    return Var(np.stack([v.value for v in vars_]), tuple(vars_), bw)


def sum_(a, axis=None, keepdims=False):
    def bw(out):
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.shape))
    return Var(a.value.sum(axis=axis, keepdims=keepdims), (a,), bw)


def mean(a, axis=None):
    n = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis), 1.0 / n)


def relu(a):
    mask = a.value > 0

    def bw(out):
        a.accumulate(out.grad * mask)
    return Var(a.value * mask, (a,), bw)


def sigmoid(a):
    val = T.sigmoid(a.value)

    def bw(out):
        a.accumulate(out.grad * val * (1.0 - val))
    return Var(val, (a,), bw)


def softmax(a, axis=-1):
    val = T.softmax(a.value, axis=axis)

    def bw(out):
        g = out.grad
        a.accumulate(val * (g - (g * val).sum(axis=axis, keepdims=True)))
    return Var(val, (a,), bw)


def channel_mix(x, w, b=None):
    """1x1 convolution over the leading axis of x (any trailing shape)."""
    x, w = lift(x), lift(w)
    val = np.tensordot(w.value, x.value, axes=(1, 0))
    trail = (1,) * (x.value.ndim - 1)
    parents = (x, w)
    if b is not None:
        b = lift(b)
        val = val + b.value.reshape((-1,) + trail)
        parents = (x, w, b)

    def bw(out):
        g = out.grad
        x.accumulate(np.tensordot(w.value, g, axes=(0, 0)))
        gf = g.reshape(g.shape[0], -1)
        w.accumulate(gf @ x.value.reshape(x.shape[0], -1).T)
        if b is not None:
            b.accumulate(gf.sum(axis=1))
    return Var(val, parents, bw)


def box_filter3(x):
    def bw(out):
        g = out.grad / 9.0
        h, w = x.shape[1:]
        gp = np.zeros((g.shape[0], h + 2, w + 2))
        for dy in range(3):
            for dx in range(3):
                gp[:, dy:dy + h, dx:dx + w] += g
        # fold edge-replicated padding back onto the border pixels
        gp[:, 1, :] += gp[:, 0, :]
        gp[:, h, :] += gp[:, h + 1, :]
        gp[:, :, 1] += gp[:, :, 0]
        gp[:, :, w] += gp[:, :, w + 1]
        x.accumulate(gp[:, 1:h + 1, 1:w + 1])
    return Var(T.box_filter3(x.value), (x,), bw)


def resize(x, new_h, new_w):
    """Corner-aligned bilinear resize of a (C, H, W) variable."""
    _, h, w = x.shape
    if (h, w) == (new_h, new_w):
        return x
    rh = T.resize_matrix(h, new_h)
    rw = T.resize_matrix(w, new_w)

    def bw(out):
        x.accumulate(rh.T @ out.grad @ rw)
    return Var(rh @ x.value @ rw.T, (x,), bw)


def loss(pred, fn, *args):
    """Scalar node from a loss function returning a LossValue(value, gradient)."""
    lv = fn(pred.value, *args)

    def bw(out):
        pred.accumulate(out.grad * lv.gradient)
    return Var(lv.value, (pred,), bw)


def backward(root):
    order = []
    seen = set()
    stack_ = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack_.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node)
