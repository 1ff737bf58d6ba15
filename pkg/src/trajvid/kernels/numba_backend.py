"""Numba-compiled kernel implementations.

Same contracts as numpy_backend.  Loops are arranged so every output cell is
owned by exactly one prange iteration, which keeps results deterministic for
any thread count.  Accumulation happens in float64 and is cast back to the
input dtype on return, matching the numpy backend's bincount behaviour.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _pad2d(x, pad):
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, :, pad : pad + h, pad : pad + w] = x
    return xp


@njit(cache=True, parallel=True)
def _conv2d_forward_f64(xp, w, stride, ho, wo):
    n, c, _, _ = xp.shape
    o = w.shape[0]
    kh, kw = w.shape[2], w.shape[3]
    s = stride
    y = np.zeros((n, o, ho, wo), dtype=np.float64)
    for ni in prange(n):
        for oi in range(o):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[oi, ci, i, j]
                        for yo in range(ho):
                            yi = yo * s + i
                            for xo in range(wo):
                                y[ni, oi, yo, xo] += wv * xp[ni, ci, yi, xo * s + j]
    return y


def conv2d_forward(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = _pad2d(x, pad)
    y = _conv2d_forward_f64(xp, w.astype(np.float64), stride, ho, wo)
    y = y.astype(x.dtype)
    if b is not None:
        y += b[None, :, None, None]
    return y


@njit(cache=True, parallel=True)
def _conv2d_grad_w(xp, gy, stride, kh, kw):
    n, c = xp.shape[0], xp.shape[1]
    o, ho, wo = gy.shape[1], gy.shape[2], gy.shape[3]
    s = stride
    gw = np.zeros((o, c, kh, kw), dtype=np.float64)
    for oi in prange(o):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    acc = 0.0
                    for ni in range(n):
                        for yo in range(ho):
                            yi = yo * s + i
                            for xo in range(wo):
                                acc += gy[ni, oi, yo, xo] * xp[ni, ci, yi, xo * s + j]
                    gw[oi, ci, i, j] = acc
    return gw


@njit(cache=True, parallel=True)
def _conv2d_grad_x(w, gy, stride, hp, wp):
    n, o, ho, wo = gy.shape
    c, kh, kw = w.shape[1], w.shape[2], w.shape[3]
    s = stride
    gxp = np.zeros((n, c, hp, wp), dtype=np.float64)
    for ni in prange(n):
        for oi in range(o):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[oi, ci, i, j]
                        for yo in range(ho):
                            yi = yo * s + i
                            for xo in range(wo):
                                gxp[ni, ci, yi, xo * s + j] += wv * gy[ni, oi, yo, xo]
    return gxp


def conv2d_backward(x, w, gy, stride, pad):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = _pad2d(x, pad)
    gy64 = gy.astype(np.float64)
    gw = _conv2d_grad_w(xp.astype(np.float64), gy64, stride, kh, kw).astype(w.dtype)
    gxp = _conv2d_grad_x(w.astype(np.float64), gy64, stride, xp.shape[2], xp.shape[3])
    gx = gxp[:, :, pad : pad + h, pad : pad + wd] if pad else gxp
    gb = gy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(gx).astype(x.dtype), gw, gb


@njit(cache=True)
def _pad3d(x, pd, ph, pw):
    n, c, d, h, w = x.shape
    xp = np.zeros((n, c, d + 2 * pd, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    xp[:, :, pd : pd + d, ph : ph + h, pw : pw + w] = x
    return xp


@njit(cache=True, parallel=True)
def _conv3d_forward_f64(xp, w, do, ho, wo):
    n, c = xp.shape[0], xp.shape[1]
    o, kd, kh, kw = w.shape[0], w.shape[2], w.shape[3], w.shape[4]
    y = np.zeros((n, o, do, ho, wo), dtype=np.float64)
    for ni in prange(n):
        for oi in range(o):
            for ci in range(c):
                for t in range(kd):
                    for i in range(kh):
                        for j in range(kw):
                            wv = w[oi, ci, t, i, j]
                            for to in range(do):
                                for yo in range(ho):
                                    for xo in range(wo):
                                        y[ni, oi, to, yo, xo] += wv * xp[ni, ci, to + t, yo + i, xo + j]
    return y


def conv3d_forward(x, w, b, pad):
    n, c, d, h, wd = x.shape
    o, _, kd, kh, kw = w.shape
    pd, ph, pw = pad
    do = d + 2 * pd - kd + 1
    ho = h + 2 * ph - kh + 1
    wo = wd + 2 * pw - kw + 1
    xp = _pad3d(x, pd, ph, pw)
    y = _conv3d_forward_f64(xp.astype(np.float64), w.astype(np.float64), do, ho, wo).astype(x.dtype)
    if b is not None:
        y += b[None, :, None, None, None]
    return y


@njit(cache=True, parallel=True)
def _conv3d_grad_w(xp, gy, kd, kh, kw):
    n, c = xp.shape[0], xp.shape[1]
    o, do, ho, wo = gy.shape[1], gy.shape[2], gy.shape[3], gy.shape[4]
    gw = np.zeros((o, c, kd, kh, kw), dtype=np.float64)
    for oi in prange(o):
        for ci in range(c):
            for t in range(kd):
                for i in range(kh):
                    for j in range(kw):
                        acc = 0.0
                        for ni in range(n):
                            for to in range(do):
                                for yo in range(ho):
                                    for xo in range(wo):
                                        acc += gy[ni, oi, to, yo, xo] * xp[ni, ci, to + t, yo + i, xo + j]
                        gw[oi, ci, t, i, j] = acc
    return gw


@njit(cache=True, parallel=True)
def _conv3d_grad_x(w, gy, dp, hp, wp):
    n, o, do, ho, wo = gy.shape
    c, kd, kh, kw = w.shape[1], w.shape[2], w.shape[3], w.shape[4]
    gxp = np.zeros((n, c, dp, hp, wp), dtype=np.float64)
    for ni in prange(n):
        for oi in range(o):
            for ci in range(c):
                for t in range(kd):
                    for i in range(kh):
                        for j in range(kw):
                            wv = w[oi, ci, t, i, j]
                            for to in range(do):
                                for yo in range(ho):
                                    for xo in range(wo):
                                        gxp[ni, ci, to + t, yo + i, xo + j] += wv * gy[ni, oi, to, yo, xo]
    return gxp


def conv3d_backward(x, w, gy, pad):
    n, c, d, h, wd = x.shape
    o, _, kd, kh, kw = w.shape
    pd, ph, pw = pad
    xp = _pad3d(x, pd, ph, pw)
    gy64 = gy.astype(np.float64)
    gw = _conv3d_grad_w(xp.astype(np.float64), gy64, kd, kh, kw).astype(w.dtype)
    gxp = _conv3d_grad_x(w.astype(np.float64), gy64, xp.shape[2], xp.shape[3], xp.shape[4])
    gx = gxp[:, :, pd : pd + d, ph : ph + h, pw : pw + wd]
    gb = gy.sum(axis=(0, 2, 3, 4))
    return np.ascontiguousarray(gx).astype(x.dtype), gw, gb


@njit(cache=True)
def _splat_forward(feat, flow):
    c, h, w = feat.shape
    acc = np.zeros((c, h, w), dtype=np.float64)
    wsum = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            tx = x + flow[0, y, x]
            ty = y + flow[1, y, x]
            x0 = int(np.floor(tx))
            y0 = int(np.floor(ty))
            fx = tx - x0
            fy = ty - y0
            for dy in range(2):
                yy = y0 + dy
                if yy < 0 or yy >= h:
                    continue
                wy = fy if dy == 1 else 1.0 - fy
                for dx in range(2):
                    xx = x0 + dx
                    if xx < 0 or xx >= w:
                        continue
                    wx = fx if dx == 1 else 1.0 - fx
                    wgt = wx * wy
                    wsum[yy, xx] += wgt
                    for ch in range(c):
                        acc[ch, yy, xx] += wgt * feat[ch, y, x]
    return acc, wsum


def splat_forward(feat, flow):
    acc, wsum = _splat_forward(feat.astype(np.float64), flow.astype(np.float64))
    return acc.astype(feat.dtype), wsum.astype(feat.dtype)


@njit(cache=True)
def _splat_backward(gacc, flow):
    c, h, w = gacc.shape
    gfeat = np.zeros((c, h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            tx = x + flow[0, y, x]
            ty = y + flow[1, y, x]
            x0 = int(np.floor(tx))
            y0 = int(np.floor(ty))
            fx = tx - x0
            fy = ty - y0
            for dy in range(2):
                yy = y0 + dy
                if yy < 0 or yy >= h:
                    continue
                wy = fy if dy == 1 else 1.0 - fy
                for dx in range(2):
                    xx = x0 + dx
                    if xx < 0 or xx >= w:
                        continue
                    wx = fx if dx == 1 else 1.0 - fx
                    wgt = wx * wy
                    for ch in range(c):
                        gfeat[ch, y, x] += wgt * gacc[ch, yy, xx]
    return gfeat


def splat_backward(gacc, flow):
    return _splat_backward(gacc.astype(np.float64), flow.astype(np.float64)).astype(gacc.dtype)


@njit(cache=True)
def _densify_forward(sx, sy, vals, h, w, sigma, support):
    acc = np.zeros((2, h, w), dtype=np.float64)
    wsum = np.zeros((h, w), dtype=np.float64)
    inv = 1.0 / (2.0 * sigma * sigma)
    r2 = support * support
    for s in range(sx.shape[0]):
        cx = sx[s]
        cy = sy[s]
        x_lo = max(0, int(np.ceil(cx - support)))
        x_hi = min(w - 1, int(np.floor(cx + support)))
        y_lo = max(0, int(np.ceil(cy - support)))
        y_hi = min(h - 1, int(np.floor(cy + support)))
        for yy in range(y_lo, y_hi + 1):
            dy = yy - cy
            for xx in range(x_lo, x_hi + 1):
                dx = xx - cx
                d2 = dx * dx + dy * dy
                if d2 <= r2:
                    wgt = np.exp(-d2 * inv)
                    wsum[yy, xx] += wgt
                    acc[0, yy, xx] += wgt * vals[s, 0]
                    acc[1, yy, xx] += wgt * vals[s, 1]
    return acc, wsum


def densify_forward(sx, sy, vals, h, w, sigma, support):
    return _densify_forward(
        np.asarray(sx, dtype=np.float64),
        np.asarray(sy, dtype=np.float64),
        np.asarray(vals, dtype=np.float64),
        h,
        w,
        float(sigma),
        float(support),
    )
