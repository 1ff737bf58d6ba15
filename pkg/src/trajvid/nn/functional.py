"""Differentiable operations over autograd Tensors.

Each op returns a new Tensor whose backward closure produces gradients
aligned with its parent tuple.  Convolutions and splatting dispatch to the
selected kernel backend; everything else is plain numpy.
"""

from __future__ import annotations

import numpy as np

from trajvid import kernels
from trajvid.nn.autograd import Tensor, as_tensor


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out, parents=(a, b), backward_fn=bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return Tensor(out, parents=(a, b), backward_fn=bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return Tensor(out, parents=(a, b), backward_fn=bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(-a.data, parents=(a,), backward_fn=lambda g: (-g,))


def pow_const(a, p: float) -> Tensor:
    a = as_tensor(a)
    out = a.data ** p

    def bw(g):
        return (g * p * a.data ** (p - 1),)

    return Tensor(out, parents=(a,), backward_fn=bw)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # branch on sign to keep exp() in-range for float32
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    out = a.data * s

    def bw(g):
        return (g * (s * (1.0 + a.data * (1.0 - s))),)

    return Tensor(out, parents=(a,), backward_fn=bw)


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        g = np.asarray(g)
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        if not keepdims:
            ax = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return Tensor(out, parents=(a,), backward_fn=bw)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / out.size

    def bw(g):
        g = np.asarray(g) / count
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        if not keepdims:
            ax = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return Tensor(out, parents=(a,), backward_fn=bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def bw(g):
        return (g.reshape(a.data.shape),)

    return Tensor(out, parents=(a,), backward_fn=bw)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    out = np.ascontiguousarray(a.data.transpose(axes))
    inv = np.argsort(axes)

    def bw(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return Tensor(out, parents=(a,), backward_fn=bw)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return Tensor(out, parents=tuple(tensors), backward_fn=bw)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    a = as_tensor(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = np.ascontiguousarray(a.data[idx])

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return Tensor(out, parents=(a,), backward_fn=bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor(out, parents=(a, b), backward_fn=bw)


def conv2d(x, w, b=None, stride=1, padding=0) -> Tensor:
    x, w = as_tensor(x), as_tensor(w)
    bt = as_tensor(b) if b is not None else None
    out = kernels.conv2d_forward(x.data, w.data, bt.data if bt is not None else None, stride, padding)
    parents = (x, w) if bt is None else (x, w, bt)

    def bw(g):
        gx, gw, gb = kernels.conv2d_backward(x.data, w.data, g, stride, padding)
        if bt is None:
            return gx, gw
        return gx, gw, gb

    return Tensor(out, parents=parents, backward_fn=bw)


def conv3d(x, w, b=None, padding=(0, 0, 0)) -> Tensor:
    x, w = as_tensor(x), as_tensor(w)
    bt = as_tensor(b) if b is not None else None
    out = kernels.conv3d_forward(x.data, w.data, bt.data if bt is not None else None, padding)
    parents = (x, w) if bt is None else (x, w, bt)

    def bw(g):
        gx, gw, gb = kernels.conv3d_backward(x.data, w.data, g, padding)
        if bt is None:
            return gx, gw
        return gx, gw, gb

    return Tensor(out, parents=parents, backward_fn=bw)


def upsample_nearest2d(x, factor: int) -> Tensor:
    """(..., H, W) -> (..., H*f, W*f) by pixel repetition."""
    x = as_tensor(x)
    out = x.data.repeat(factor, axis=-2).repeat(factor, axis=-1)

    def bw(g):
        lead = g.shape[:-2]
        h, w = x.data.shape[-2], x.data.shape[-1]
        g = g.reshape(*lead, h, factor, w, factor)
        return (g.sum(axis=(-3, -1)),)

    return Tensor(out, parents=(x,), backward_fn=bw)


def splat2d(feat, flow: np.ndarray, eps: float = 1e-8):
    """Forward bilinear splat of feat (C,H,W) by a fixed flow frame (2,H,W).

    Returns (warped Tensor, validity ndarray).  The flow carries no gradient:
    it is an input signal, not a trained quantity.
    """
    feat = as_tensor(feat)
    flow = np.asarray(flow, dtype=feat.data.dtype)
    acc, wsum = kernels.splat_forward(feat.data, flow)
    norm = np.where(wsum >= eps, 1.0 / np.maximum(wsum, eps), 0.0).astype(feat.data.dtype)
    out = acc * norm[None]

    def bw(g):
        gacc = (g * norm[None]).astype(feat.data.dtype)
        return (kernels.splat_backward(gacc, flow),)

    return Tensor(out, parents=(feat,), backward_fn=bw), wsum


def group_norm(x, num_groups: int, weight, bias, eps: float = 1e-5) -> Tensor:
    """GroupNorm over (N,C,*spatial), built from differentiable primitives."""
    x = as_tensor(x)
    n, c = x.shape[0], x.shape[1]
    spatial = x.shape[2:]
    g = reshape(x, (n, num_groups, -1))
    mu = mean(g, axis=2, keepdims=True)
    centered = sub(g, mu)
    var = mean(mul(centered, centered), axis=2, keepdims=True)
    inv = pow_const(add(var, np.array(eps, dtype=x.dtype)), -0.5)
    normed = reshape(mul(centered, inv), x.shape)
    wshape = (1, c) + (1,) * len(spatial)
    return add(mul(normed, reshape(weight, wshape)), reshape(bias, wshape))


def mse_loss(pred, target) -> Tensor:
    pred = as_tensor(pred)
    target = as_tensor(target)
    diff = sub(pred, target)
    return mean(mul(diff, diff))
