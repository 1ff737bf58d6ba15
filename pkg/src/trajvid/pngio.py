"""PNG encode/decode for frames, 16-bit depth and indexed segmentation."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from trajvid.imageops import from_uint8, from_uint16, to_uint8, to_uint16


def write_png_rgb(path, img: np.ndarray):
    """img: (3,H,W) float in [0,1]."""
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")


def read_png_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return from_uint8(arr)


def png_bytes_rgb(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png_rgb(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGB"))
    return from_uint8(arr)


def write_png_gray16(path, img: np.ndarray):
    """img: (H,W) float in [0,1], stored as 16-bit grayscale."""
    Image.fromarray(to_uint16(img)).save(path, format="PNG")


def read_png_gray16(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.dtype != np.uint16:
        arr = arr.astype(np.uint16)
    return from_uint16(arr)


def png_bytes_gray16(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint16(img)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png_gray16(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im)
    return from_uint16(arr.astype(np.uint16))


def write_png_index(path, ids: np.ndarray):
    """ids: (H,W) small non-negative integers (instance labels)."""
    Image.fromarray(ids.astype(np.uint8), mode="L").save(path, format="PNG")


def read_png_index(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im).astype(np.int64)
