"""Shared raster helpers: bilinear resize and 8/16-bit conversions.

Resizing uses half-pixel (corner-unaligned) sampling with edge clamping,
the single convention pinned for the whole package so resized tensors are
bit-reproducible.
"""

import numpy as np


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (C,H,W) or (H,W) with bilinear sampling, half-pixel centers."""
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    c, h, w = img.shape
    if (h, w) == (out_h, out_w):
        out = img.copy()
        return out[0] if squeeze else out
    sy = h / out_h
    sx = w / out_w
    ys = (np.arange(out_h) + 0.5) * sy - 0.5
    xs = (np.arange(out_w) + 0.5) * sx - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.int64)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[None, :, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, None, :]
    tl = img[:, y0[:, None], x0[None, :]]
    tr = img[:, y0[:, None], x1[None, :]]
    bl = img[:, y1[:, None], x0[None, :]]
    br = img[:, y1[:, None], x1[None, :]]
    top = tl + (tr - tl) * fx
    bot = bl + (br - bl) * fx
    out = (top + (bot - top) * fy).astype(img.dtype)
    return out[0] if squeeze else out


def to_uint8(img: np.ndarray) -> np.ndarray:
    """[0,1] float (C,H,W) -> uint8 (H,W,C) for PNG output."""
    arr = np.clip(img, 0.0, 1.0)
    arr = np.round(arr * 255.0).astype(np.uint8)
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)
    return arr


def from_uint8(arr: np.ndarray) -> np.ndarray:
    """uint8 (H,W,C) or (H,W) -> [0,1] float32 (C,H,W)."""
    a = arr.astype(np.float32) / 255.0
    if a.ndim == 2:
        a = a[None]
    else:
        a = a.transpose(2, 0, 1)
    return a


def to_uint16(img: np.ndarray) -> np.ndarray:
    """[0,1] float (H,W) -> uint16 (H,W) for 16-bit PNG depth output."""
    return np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)


def from_uint16(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float32) / 65535.0
