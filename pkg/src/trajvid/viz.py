"""Motion heatmap with a pinned blue-to-red colormap.

The 256-entry table interpolates linearly through five anchors:
index 0 = blue (0,0,255), 64 = cyan, 128 = green, 192 = yellow,
255 = red (255,0,0).  Pixel intensity is the channel-mean absolute
difference between the last and first frame on the absolute [0,1] scale
(no per-image renormalization), so identical inputs yield identical bytes.
"""

from __future__ import annotations

import numpy as np

_ANCHORS = [
    (0, (0, 0, 255)),
    (64, (0, 255, 255)),
    (128, (0, 255, 0)),
    (192, (255, 255, 0)),
    (255, (255, 0, 0)),
]


def colormap_table() -> np.ndarray:
    """The pinned 256x3 uint8 lookup table."""
    table = np.zeros((256, 3), dtype=np.float64)
    for (i0, c0), (i1, c1) in zip(_ANCHORS, _ANCHORS[1:]):
        span = i1 - i0
        for k in range(i0, i1 + 1):
            f = (k - i0) / span
            table[k] = [(1 - f) * a + f * b for a, b in zip(c0, c1)]
    return np.round(table).astype(np.uint8)


_TABLE = colormap_table()


def motion_heatmap(frame_first: np.ndarray, frame_last: np.ndarray) -> np.ndarray:
    """(3,H,W) first/last frames in [0,1] -> (3,H,W) uint8-backed RGB floats."""
    diff = np.abs(np.asarray(frame_last, dtype=np.float64) - np.asarray(frame_first, dtype=np.float64))
    intensity = diff.mean(axis=0)
    idx = np.clip(np.round(intensity * 255.0), 0, 255).astype(np.int64)
    rgb = _TABLE[idx]  # (H,W,3) uint8
    return rgb.transpose(2, 0, 1).astype(np.float32) / 255.0
