"""Segmentation and depth sources behind one pluggable interface.

Three families:

- synthetic providers bound to a rendered scene record: exact ground truth,
  bit-deterministic given the scene seed;
- a weight-free heuristic provider for arbitrary frames (luminance bands),
  used at inference time when no external model is wired up;
- external adapters speaking a documented subprocess byte protocol, the slot
  where real pretrained models plug in.

External adapter wire contract: the child process receives one PNG-encoded
RGB frame on stdin.  A segmentation adapter replies with a raw tensor: three
little-endian uint32 (C, H, W) then C*H*W row-major float32 values.  A depth
adapter replies with a 16-bit single-channel PNG at frame resolution.
"""

from __future__ import annotations

import struct
import subprocess
from dataclasses import dataclass

import numpy as np

from trajvid.core import Frame
from trajvid.errors import InvariantViolation, MisalignedResolutionError, ProviderUnavailableError
from trajvid.imageops import bilinear_resize
from trajvid.pngio import decode_png_gray16, png_bytes_rgb

PROVENANCES = ("pretrained_external", "synthetic_ground_truth")


@dataclass(frozen=True)
class SegmentationFeatures:
    """Dense per-pixel embedding or one-hot instance channels (C_s,H_s,W_s)."""

    data: np.ndarray
    provenance: str
    resize_policy: str = "bilinear"

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float32, copy=True)
        d.flags.writeable = False
        object.__setattr__(self, "data", d)
        report = []
        if self.provenance not in PROVENANCES:
            report.append(f"provenance {self.provenance!r} not one of {PROVENANCES}")
        if d.ndim != 3:
            report.append(f"segmentation features must be (C,H,W), got ndim={d.ndim}")
        elif self.provenance == "synthetic_ground_truth":
            if not np.isin(d, (0.0, 1.0)).all():
                report.append("one-hot features must contain only 0 and 1")
            elif (d.sum(axis=0) > 1.0 + 1e-6).any():
                report.append("one-hot channels must sum to <= 1 per pixel")
        if report:
            raise InvariantViolation(report)

    def aligned_to(self, height: int, width: int) -> np.ndarray:
        """Resize to the frame grid under the stored policy."""
        if self.data.shape[1:] == (height, width):
            return np.asarray(self.data)
        if self.resize_policy != "bilinear":
            raise MisalignedResolutionError(
                f"unknown resize policy {self.resize_policy!r} for {self.data.shape} -> ({height},{width})"
            )
        return bilinear_resize(np.asarray(self.data), height, width)

    @property
    def instance_ids(self) -> np.ndarray:
        return np.argmax(self.data, axis=0)


@dataclass(frozen=True)
class DepthMap:
    """Normalized inverse depth: 1 = nearest, 0 = farthest."""

    frame: Frame
    provenance: str

    def __post_init__(self):
        report = []
        if self.frame.color_space != "depth":
            report.append(f"depth map frame must have color_space='depth', got {self.frame.color_space!r}")
        if self.provenance not in PROVENANCES:
            report.append(f"provenance {self.provenance!r} not one of {PROVENANCES}")
        if report:
            raise InvariantViolation(report)

    @property
    def data(self) -> np.ndarray:
        return self.frame.data[0]


class SceneTruthProvider:
    """Exact segmentation/depth for the first frame of one rendered scene."""

    def __init__(self, seg_onehot: np.ndarray, depth: np.ndarray):
        self._seg = np.asarray(seg_onehot, dtype=np.float32)
        self._depth = np.asarray(depth, dtype=np.float32)

    def segment(self, frame: Frame) -> SegmentationFeatures:
        if (frame.height, frame.width) != self._seg.shape[1:]:
            raise MisalignedResolutionError(
                f"frame {frame.height}x{frame.width} does not match scene truth {self._seg.shape[1:]}"
            )
        return SegmentationFeatures(self._seg, provenance="synthetic_ground_truth")

    def estimate_depth(self, frame: Frame) -> DepthMap:
        if (frame.height, frame.width) != self._depth.shape:
            raise MisalignedResolutionError(
                f"frame {frame.height}x{frame.width} does not match scene truth {self._depth.shape}"
            )
        return DepthMap(
            frame=Frame(self._depth[None], color_space="depth"),
            provenance="synthetic_ground_truth",
        )


class LuminanceBandProvider:
    """Weight-free stand-in for arbitrary frames.

    Depth is rescaled luminance (bright = near); segmentation one-hot-encodes
    luminance bands.  Deterministic, resolution-preserving, and obviously not
    a real model: it exists so the full pipeline runs on any input image.
    """

    def __init__(self, num_bands: int = 3):
        self.num_bands = num_bands

    def _luma(self, frame: Frame) -> np.ndarray:
        r, g, b = frame.data[0], frame.data[1], frame.data[2]
        return 0.299 * r + 0.587 * g + 0.114 * b

    def segment(self, frame: Frame) -> SegmentationFeatures:
        luma = self._luma(frame)
        edges = np.linspace(0.0, 1.0, self.num_bands + 1)[1:-1]
        ids = np.digitize(luma, edges)
        onehot = np.zeros((self.num_bands, *luma.shape), dtype=np.float32)
        for k in range(self.num_bands):
            onehot[k][ids == k] = 1.0
        return SegmentationFeatures(onehot, provenance="synthetic_ground_truth")

    def estimate_depth(self, frame: Frame) -> DepthMap:
        luma = self._luma(frame)
        lo, hi = float(luma.min()), float(luma.max())
        span = hi - lo
        depth = np.full_like(luma, 0.5) if span < 1e-9 else (luma - lo) / span
        return DepthMap(
            frame=Frame(np.clip(depth, 0.0, 1.0)[None], color_space="depth"),
            provenance="synthetic_ground_truth",
        )


def _run_adapter(command, frame: Frame, timeout: float) -> bytes:
    payload = png_bytes_rgb(np.asarray(frame.data))
    try:
        proc = subprocess.run(
            command, input=payload, stdout=subprocess.PIPE, stderr=subprocess.PIPE, timeout=timeout
        )
    except (OSError, subprocess.TimeoutExpired) as e:
        raise ProviderUnavailableError(f"external provider {command!r} failed: {e}") from e
    if proc.returncode != 0:
        raise ProviderUnavailableError(
            f"external provider {command!r} exited {proc.returncode}: {proc.stderr[:200]!r}"
        )
    return proc.stdout


class ExternalSegmentationProvider:
    """Subprocess adapter returning a dense float32 feature tensor."""

    def __init__(self, command, timeout: float = 60.0):
        self.command = list(command)
        self.timeout = timeout

    def segment(self, frame: Frame) -> SegmentationFeatures:
        out = _run_adapter(self.command, frame, self.timeout)
        if len(out) < 12:
            raise ProviderUnavailableError("segmentation adapter reply shorter than its header")
        c, h, w = struct.unpack("<III", out[:12])
        need = 12 + 4 * c * h * w
        if len(out) < need:
            raise ProviderUnavailableError(
                f"segmentation adapter reply truncated: {len(out)} bytes, header says {need}"
            )
        data = np.frombuffer(out, dtype="<f4", count=c * h * w, offset=12).reshape(c, h, w)
        return SegmentationFeatures(
            normalize_external_features(data), provenance="pretrained_external"
        )

    def close(self):
        pass


class ExternalDepthProvider:
    """Subprocess adapter returning a 16-bit grayscale PNG."""

    def __init__(self, command, timeout: float = 60.0):
        self.command = list(command)
        self.timeout = timeout

    def estimate_depth(self, frame: Frame) -> DepthMap:
        out = _run_adapter(self.command, frame, self.timeout)
        try:
            depth = decode_png_gray16(out)
        except Exception as e:
            raise ProviderUnavailableError(f"depth adapter reply is not a 16-bit PNG: {e}") from e
        if depth.shape != (frame.height, frame.width):
            depth = bilinear_resize(depth, frame.height, frame.width)
        return DepthMap(
            frame=Frame(np.clip(depth, 0.0, 1.0)[None], color_space="depth"),
            provenance="pretrained_external",
        )

    def close(self):
        pass


def normalize_external_features(data: np.ndarray) -> np.ndarray:
    """Shift/scale external feature maps into a bounded range, preserving order."""
    data = data.astype(np.float32)
    lo, hi = float(data.min()), float(data.max())
    if not np.isfinite([lo, hi]).all():
        raise ProviderUnavailableError("external features contain non-finite values")
    span = hi - lo
    if span < 1e-12:
        return np.zeros_like(data)
    return (data - lo) / span
