"""Independent brute-force oracles used to freeze expected test values.

Everything here is written as literal per-element loops, deliberately
ignoring vectorization, so it shares no code path with the implementations
it checks.
"""

import math

import numpy as np


def splat_oracle(feat, flow):
    """Naive per-source 4-neighbour scatter. Returns (acc, wsum)."""
    c, h, w = feat.shape
    acc = np.zeros((c, h, w), dtype=np.float64)
    wsum = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            tx = x + float(flow[0, y, x])
            ty = y + float(flow[1, y, x])
            x0, y0 = math.floor(tx), math.floor(ty)
            fx, fy = tx - x0, ty - y0
            for dy, wy in ((0, 1.0 - fy), (1, fy)):
                for dx, wx in ((0, 1.0 - fx), (1, fx)):
                    xx, yy = x0 + dx, y0 + dy
                    if 0 <= xx < w and 0 <= yy < h:
                        wsum[yy, xx] += wx * wy
                        for ch in range(c):
                            acc[ch, yy, xx] += wx * wy * float(feat[ch, y, x])
    return acc, wsum


def warp_oracle(feat, flow, eps=1e-8):
    """splat_oracle plus weight normalization: the full warp contract."""
    acc, wsum = splat_oracle(feat, flow)
    out = np.zeros_like(acc)
    for y in range(wsum.shape[0]):
        for x in range(wsum.shape[1]):
            if wsum[y, x] >= eps:
                out[:, y, x] = acc[:, y, x] / wsum[y, x]
    return out, wsum


def bilinear_resize_oracle(img, out_h, out_w):
    """Direct per-output-pixel bilinear formula, half-pixel centers, edge clamp."""
    c, h, w = img.shape
    out = np.zeros((c, out_h, out_w), dtype=np.float64)
    for oy in range(out_h):
        for ox in range(out_w):
            sy = (oy + 0.5) * h / out_h - 0.5
            sx = (ox + 0.5) * w / out_w - 0.5
            y0 = min(max(math.floor(sy), 0), h - 1)
            x0 = min(max(math.floor(sx), 0), w - 1)
            y1 = min(y0 + 1, h - 1)
            x1 = min(x0 + 1, w - 1)
            fy = min(max(sy - y0, 0.0), 1.0)
            fx = min(max(sx - x0, 0.0), 1.0)
            for ch in range(c):
                top = img[ch, y0, x0] * (1 - fx) + img[ch, y0, x1] * fx
                bot = img[ch, y1, x0] * (1 - fx) + img[ch, y1, x1] * fx
                out[ch, oy, ox] = top * (1 - fy) + bot * fy
    return out


def resize_flow_oracle(flow_frame, out_h, out_w):
    """Bilinear resize of one (2,H,W) flow frame plus per-axis magnitude rescale."""
    h, w = flow_frame.shape[1], flow_frame.shape[2]
    res = bilinear_resize_oracle(flow_frame, out_h, out_w)
    res[0] *= out_w / w
    res[1] *= out_h / h
    return res


def densify_oracle(sources, h, w, sigma, support):
    """Double-loop truncated-Gaussian weighted average.

    sources: list of (x, y, vx, vy).
    """
    out = np.zeros((2, h, w), dtype=np.float64)
    for py in range(h):
        for px in range(w):
            total_w = 0.0
            vx_acc = 0.0
            vy_acc = 0.0
            for (x, y, vx, vy) in sources:
                d2 = (px - x) ** 2 + (py - y) ** 2
                if d2 <= support * support:
                    wgt = math.exp(-d2 / (2.0 * sigma * sigma))
                    total_w += wgt
                    vx_acc += wgt * vx
                    vy_acc += wgt * vy
            if total_w >= 1e-8:
                out[0, py, px] = vx_acc / total_w
                out[1, py, px] = vy_acc / total_w
    return out


def arc_length_resample_oracle(track, num_points):
    """March along the polyline and sample at uniform arc-length fractions."""
    pts = [(float(x), float(y)) for x, y in track]
    if len(pts) == 1:
        return [pts[0]] * num_points
    seg_len = []
    for a, b in zip(pts, pts[1:]):
        seg_len.append(math.hypot(b[0] - a[0], b[1] - a[1]))
    total = sum(seg_len)
    if total == 0:
        return [pts[0]] * num_points
    out = []
    for k in range(num_points):
        target = total * k / (num_points - 1)
        acc = 0.0
        placed = False
        for (a, b), sl in zip(zip(pts, pts[1:]), seg_len):
            if sl == 0:
                continue
            if acc + sl >= target - 1e-12:
                f = (target - acc) / sl
                f = min(max(f, 0.0), 1.0)
                out.append((a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])))
                placed = True
                break
            acc += sl
        if not placed:
            out.append(pts[-1])
    return out


def ssim_window_oracle(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, peak=1.0):
    """Literal per-window SSIM over all fully-inside window positions.

    a, b: (H,W) single channel. Returns the mean over window positions.
    """
    h, w = a.shape
    half = window // 2
    g = np.zeros((window, window))
    for i in range(window):
        for j in range(window):
            g[i, j] = math.exp(-(((i - half) ** 2) + ((j - half) ** 2)) / (2 * sigma * sigma))
    g /= g.sum()
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    vals = []
    for y in range(half, h - half):
        for x in range(w - 2 * half):
            xa = a[y - half : y + half + 1, x : x + window]
            xb = b[y - half : y + half + 1, x : x + window]
            mu_a = (g * xa).sum()
            mu_b = (g * xb).sum()
            var_a = (g * (xa - mu_a) ** 2).sum()
            var_b = (g * (xb - mu_b) ** 2).sum()
            cov = (g * (xa - mu_a) * (xb - mu_b)).sum()
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(vals))


def finite_difference_grad(f, x, eps=1e-5):
    """Central finite differences of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return g
