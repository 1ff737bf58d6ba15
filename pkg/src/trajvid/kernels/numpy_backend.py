"""Pure-numpy kernel implementations.

Convolutions are evaluated as a sum of shifted GEMMs (one tensordot per
kernel tap), which keeps everything inside BLAS.  Scatter-style kernels
(splatting, densification) use bincount accumulation.  Accumulation order is
fixed, so results are deterministic run to run.
"""

import numpy as np


def _pad2d(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, w, b, stride, pad):
    """x (N,C,H,W), w (O,C,kh,kw), b (O,) or None -> y (N,O,Ho,Wo)."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    s = stride
    ho = (h + 2 * pad - kh) // s + 1
    wo = (wd + 2 * pad - kw) // s + 1
    xp = _pad2d(x, pad)
    y = np.zeros((o, n, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + s * ho : s, j : j + s * wo : s]
            y += np.tensordot(w[:, :, i, j], patch, axes=(1, 1))
    y = np.ascontiguousarray(y.transpose(1, 0, 2, 3))
    if b is not None:
        y += b[None, :, None, None]
    return y


def conv2d_backward(x, w, gy, stride, pad):
    """Gradients of conv2d_forward w.r.t. (x, w, b)."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    s = stride
    ho, wo = gy.shape[2], gy.shape[3]
    xp = _pad2d(x, pad)
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + s * ho : s, j : j + s * wo : s]
            # (N,O,Ho,Wo) x (N,C,Ho,Wo) contracted over N,Ho,Wo
            gw[:, :, i, j] = np.tensordot(gy, patch, axes=([0, 2, 3], [0, 2, 3]))
            contrib = np.tensordot(gy, w[:, :, i, j], axes=(1, 0))  # (N,Ho,Wo,C)
            gxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += contrib.transpose(0, 3, 1, 2)
    gx = gxp[:, :, pad : pad + h, pad : pad + wd] if pad else gxp
    gb = gy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(gx), gw, gb


def _pad3d(x, pad):
    pd, ph, pw = pad
    if pd == 0 and ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pd, pd), (ph, ph), (pw, pw)))


def conv3d_forward(x, w, b, pad):
    """x (N,C,D,H,W), w (O,C,kd,kh,kw), pad (pd,ph,pw), stride 1."""
    n, c, d, h, wd = x.shape
    o, _, kd, kh, kw = w.shape
    pd, ph, pw = pad
    do = d + 2 * pd - kd + 1
    ho = h + 2 * ph - kh + 1
    wo = wd + 2 * pw - kw + 1
    xp = _pad3d(x, pad)
    y = np.zeros((o, n, do, ho, wo), dtype=x.dtype)
    for t in range(kd):
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, :, t : t + do, i : i + ho, j : j + wo]
                y += np.tensordot(w[:, :, t, i, j], patch, axes=(1, 1))
    y = np.ascontiguousarray(y.transpose(1, 0, 2, 3, 4))
    if b is not None:
        y += b[None, :, None, None, None]
    return y


def conv3d_backward(x, w, gy, pad):
    n, c, d, h, wd = x.shape
    o, _, kd, kh, kw = w.shape
    pd, ph, pw = pad
    do, ho, wo = gy.shape[2], gy.shape[3], gy.shape[4]
    xp = _pad3d(x, pad)
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for t in range(kd):
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, :, t : t + do, i : i + ho, j : j + wo]
                gw[:, :, t, i, j] = np.tensordot(gy, patch, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
                contrib = np.tensordot(gy, w[:, :, t, i, j], axes=(1, 0))  # (N,Do,Ho,Wo,C)
                gxp[:, :, t : t + do, i : i + ho, j : j + wo] += contrib.transpose(0, 4, 1, 2, 3)
    gx = gxp[:, :, pd : pd + d, ph : ph + h, pw : pw + wd]
    gb = gy.sum(axis=(0, 2, 3, 4))
    return np.ascontiguousarray(gx), gw, gb


def splat_forward(feat, flow):
    """Forward bilinear scatter of feat (C,H,W) along flow (2,H,W).

    Each source pixel contributes value*weight to the four integer
    neighbours of its displaced position; out-of-bounds contributions are
    dropped.  Returns raw accumulators (acc, wsum); normalization is the
    caller's job.
    """
    c, h, w = feat.shape
    gy, gx = np.mgrid[0:h, 0:w]
    tx = (gx + flow[0]).ravel()
    ty = (gy + flow[1]).ravel()
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    fx = tx - x0
    fy = ty - y0
    vals = feat.reshape(c, -1)
    acc = np.zeros(c * h * w, dtype=np.float64)
    wsum = np.zeros(h * w, dtype=np.float64)
    ch_off = np.arange(c)[:, None] * (h * w)
    for dy in (0, 1):
        wy = fy if dy else 1.0 - fy
        yy = y0 + dy
        for dx in (0, 1):
            wx = fx if dx else 1.0 - fx
            xx = x0 + dx
            ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
            if not ok.any():
                continue
            wgt = (wx * wy)[ok]
            idx = (yy * w + xx)[ok]
            wsum += np.bincount(idx, weights=wgt, minlength=h * w)
            flat = (ch_off + idx[None, :]).ravel()
            acc += np.bincount(flat, weights=(vals[:, ok] * wgt).ravel(), minlength=c * h * w)
    return acc.reshape(c, h, w).astype(feat.dtype), wsum.reshape(h, w).astype(feat.dtype)


def splat_backward(gacc, flow):
    """Adjoint of splat_forward w.r.t. feat: a bilinear gather of gacc."""
    c, h, w = gacc.shape
    gy, gx = np.mgrid[0:h, 0:w]
    tx = (gx + flow[0]).ravel()
    ty = (gy + flow[1]).ravel()
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    fx = tx - x0
    fy = ty - y0
    g = gacc.reshape(c, -1)
    gfeat = np.zeros((c, h * w), dtype=gacc.dtype)
    for dy in (0, 1):
        wy = fy if dy else 1.0 - fy
        yy = y0 + dy
        for dx in (0, 1):
            wx = fx if dx else 1.0 - fx
            xx = x0 + dx
            ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
            if not ok.any():
                continue
            idx = (yy * w + xx)[ok]
            gfeat[:, ok] += g[:, idx] * (wx * wy)[ok]
    return gfeat.reshape(c, h, w)


def densify_forward(sx, sy, vals, h, w, sigma, support):
    """Truncated-Gaussian scatter of sparse vectors onto an (2,h,w) grid.

    sx, sy: source coordinates (S,) in pixels; vals: (S,2) flow values.
    Weights exp(-d^2 / (2 sigma^2)) for d <= support, else zero.  Returns
    raw accumulators (acc (2,h,w), wsum (h,w)).
    """
    acc = np.zeros((2, h, w), dtype=np.float64)
    wsum = np.zeros((h, w), dtype=np.float64)
    inv = 1.0 / (2.0 * sigma * sigma)
    r2 = float(support) * float(support)
    for s in range(sx.shape[0]):
        cx, cy = float(sx[s]), float(sy[s])
        x_lo = max(0, int(np.ceil(cx - support)))
        x_hi = min(w - 1, int(np.floor(cx + support)))
        y_lo = max(0, int(np.ceil(cy - support)))
        y_hi = min(h - 1, int(np.floor(cy + support)))
        if x_lo > x_hi or y_lo > y_hi:
            continue
        ys = np.arange(y_lo, y_hi + 1)[:, None] - cy
        xs = np.arange(x_lo, x_hi + 1)[None, :] - cx
        d2 = ys * ys + xs * xs
        wgt = np.where(d2 <= r2, np.exp(-d2 * inv), 0.0)
        wsum[y_lo : y_hi + 1, x_lo : x_hi + 1] += wgt
        acc[0, y_lo : y_hi + 1, x_lo : x_hi + 1] += wgt * vals[s, 0]
        acc[1, y_lo : y_hi + 1, x_lo : x_hi + 1] += wgt * vals[s, 1]
    return acc, wsum
