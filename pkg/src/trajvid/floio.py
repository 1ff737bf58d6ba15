"""Middlebury .flo flow file reader/writer.

Layout: float32 magic 202021.25, int32 width, int32 height, then
width*height little-endian float32 (u, v) pairs in row-major order.
One file holds one flow frame; sequences use ``flow_0000.flo`` numbering.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from trajvid.errors import FileUnreadableError

FLO_MAGIC = np.float32(202021.25)


def write_flo(path, flow_frame: np.ndarray):
    """flow_frame: (2,H,W), channel 0 = u (dx), channel 1 = v (dy)."""
    if flow_frame.ndim != 3 or flow_frame.shape[0] != 2:
        raise ValueError(f"expected (2,H,W) flow frame, got {flow_frame.shape}")
    h, w = flow_frame.shape[1], flow_frame.shape[2]
    with open(path, "wb") as f:
        np.array([FLO_MAGIC], dtype="<f4").tofile(f)
        np.array([w, h], dtype="<i4").tofile(f)
        interleaved = np.empty((h, w, 2), dtype="<f4")
        interleaved[:, :, 0] = flow_frame[0]
        interleaved[:, :, 1] = flow_frame[1]
        interleaved.tofile(f)


def read_flo(path) -> np.ndarray:
    """Returns (2,H,W) float32."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise FileUnreadableError(f"cannot read {path}: {e}") from e
    if len(raw) < 12:
        raise FileUnreadableError(f"{path}: truncated .flo header")
    magic = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if magic != FLO_MAGIC:
        raise FileUnreadableError(f"{path}: bad magic {magic!r}, not a .flo file")
    w, h = np.frombuffer(raw, dtype="<i4", count=2, offset=4)
    expected = 12 + 8 * int(w) * int(h)
    if len(raw) < expected:
        raise FileUnreadableError(f"{path}: payload shorter than {w}x{h} flow")
    data = np.frombuffer(raw, dtype="<f4", count=2 * int(w) * int(h), offset=12)
    data = data.reshape(int(h), int(w), 2)
    out = np.empty((2, int(h), int(w)), dtype=np.float32)
    out[0] = data[:, :, 0]
    out[1] = data[:, :, 1]
    return out


def flow_frame_name(t: int) -> str:
    return f"flow_{t:04d}.flo"


def write_flow_sequence(out_dir, flow: np.ndarray):
    """Write (T-1,2,H,W) as flow_0000.flo ... flow_{T-2:04d}.flo."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in range(flow.shape[0]):
        write_flo(out_dir / flow_frame_name(t), flow[t])


def read_flow_sequence(in_dir) -> np.ndarray:
    in_dir = Path(in_dir)
    files = sorted(in_dir.glob("flow_*.flo"))
    if not files:
        raise FileUnreadableError(f"no flow_*.flo files in {in_dir}")
    return np.stack([read_flo(f) for f in files])
