"""Foundational value types: frames, flows, feature maps, pyramids, videos.

All types are immutable after construction (backing arrays are copied and
write-protected) and compare by value.  Normal constructors validate their
invariants and raise InvariantViolation; ``unchecked`` constructors skip
validation so tests and tooling can build deliberately broken objects and
inspect ``validate`` reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from trajvid.errors import InvariantViolation

RANGE_ATOL = 1e-6
MIN_FRAME_SIDE = 8

COLOR_SPACES = ("rgb", "depth", "latent")
BRANCHES = ("rgb", "depth", "fused")


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class Frame:
    """Single image plane: RGB (3,H,W) in [0,1], depth (1,H,W) in [0,1], or latent."""

    data: np.ndarray
    color_space: str = "rgb"

    def __post_init__(self):
        data = np.asarray(self.data)
        dtype = np.float64 if data.dtype == np.float64 else np.float32
        object.__setattr__(self, "data", _freeze(data.astype(dtype)))
        report = validate(self)
        if report:
            raise InvariantViolation(report)

    @classmethod
    def unchecked(cls, data, color_space="rgb") -> "Frame":
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", _freeze(np.asarray(data)))
        object.__setattr__(obj, "color_space", color_space)
        return obj

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        return (
            isinstance(other, Frame)
            and self.color_space == other.color_space
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class FlowField:
    """Dense displacement field (T-1,2,H,W), channel 0 = dx, channel 1 = dy, in pixels.

    ``anchored`` means frame t maps frame 0 onto frame t+1 (cumulative
    displacement), the convention used throughout the pipeline.
    """

    data: np.ndarray
    anchored: bool = True

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(np.asarray(self.data)))
        report = validate(self)
        if report:
            raise InvariantViolation(report)

    @classmethod
    def unchecked(cls, data, anchored=True) -> "FlowField":
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", _freeze(np.asarray(data)))
        object.__setattr__(obj, "anchored", anchored)
        return obj

    @property
    def num_frames(self) -> int:
        """T: the flow covers transitions from frame 0 to frames 1..T-1."""
        return self.data.shape[0] + 1

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    def __eq__(self, other):
        return (
            isinstance(other, FlowField)
            and self.anchored == other.anchored
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """One pyramid level: (C_r, H_r, W_r) at stride 2**scale_index of base_hw."""

    data: np.ndarray
    scale_index: int
    base_hw: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(np.asarray(self.data)))
        object.__setattr__(self, "base_hw", tuple(self.base_hw))
        report = validate(self)
        if report:
            raise InvariantViolation(report)

    @classmethod
    def unchecked(cls, data, scale_index, base_hw) -> "FeatureMap":
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", _freeze(np.asarray(data)))
        object.__setattr__(obj, "scale_index", scale_index)
        object.__setattr__(obj, "base_hw", tuple(base_hw))
        return obj

    @property
    def stride(self) -> int:
        return 2 ** self.scale_index

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, FeatureMap)
            and self.scale_index == other.scale_index
            and self.base_hw == other.base_hw
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    """Ordered multi-scale feature maps from one encoder branch."""

    levels: tuple
    branch: str = "rgb"

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        report = validate(self)
        if report:
            raise InvariantViolation(report)

    @classmethod
    def unchecked(cls, levels, branch="rgb") -> "FeaturePyramid":
        obj = object.__new__(cls)
        object.__setattr__(obj, "levels", tuple(levels))
        object.__setattr__(obj, "branch", branch)
        return obj

    @property
    def scale_indices(self) -> tuple[int, ...]:
        return tuple(lv.scale_index for lv in self.levels)

    def __eq__(self, other):
        return (
            isinstance(other, FeaturePyramid)
            and self.branch == other.branch
            and self.levels == other.levels
        )


@dataclass(frozen=True, eq=False)
class VideoTensor:
    """Frame sequence (T,C,H,W); pixel-space videos live in [0,1]."""

    data: np.ndarray
    fps: float = 7.0
    pixel_space: bool = True

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(np.asarray(self.data)))
        report = validate(self)
        if report:
            raise InvariantViolation(report)

    @classmethod
    def unchecked(cls, data, fps=7.0, pixel_space=True) -> "VideoTensor":
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", _freeze(np.asarray(data)))
        object.__setattr__(obj, "fps", fps)
        object.__setattr__(obj, "pixel_space", pixel_space)
        return obj

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    def frame(self, t: int) -> Frame:
        space = "rgb" if self.data.shape[1] == 3 else "latent"
        return Frame(self.data[t], color_space=space)

    def __eq__(self, other):
        return (
            isinstance(other, VideoTensor)
            and self.fps == other.fps
            and self.pixel_space == other.pixel_space
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


def _validate_frame(frame: Frame) -> list[str]:
    report = []
    d = frame.data
    if frame.color_space not in COLOR_SPACES:
        report.append(f"color_space {frame.color_space!r} not one of {COLOR_SPACES}")
        return report
    if d.ndim != 3:
        report.append(f"frame data must be (C,H,W), got ndim={d.ndim}")
        return report
    c, h, w = d.shape
    if frame.color_space == "rgb" and c != 3:
        report.append(f"rgb frame must have 3 channels, got {c}")
    if frame.color_space == "depth" and c != 1:
        report.append(f"depth frame must have 1 channel, got {c}")
    if h < MIN_FRAME_SIDE or w < MIN_FRAME_SIDE:
        report.append(f"frame spatial size {h}x{w} below minimum {MIN_FRAME_SIDE}")
    if not np.isfinite(d).all():
        report.append("frame contains non-finite values")
    elif frame.color_space in ("rgb", "depth"):
        if d.size and (d.min() < -RANGE_ATOL or d.max() > 1.0 + RANGE_ATOL):
            report.append(f"{frame.color_space} values outside [0,1]: range [{d.min():g},{d.max():g}]")
    return report


def _validate_flow(flow: FlowField) -> list[str]:
    report = []
    d = flow.data
    if d.ndim != 4 or d.shape[1] != 2:
        report.append(f"flow data must be (T-1,2,H,W), got shape {d.shape}")
        return report
    if d.shape[0] < 1:
        report.append("flow must cover at least one transition (T >= 2)")
    h, w = d.shape[2], d.shape[3]
    if not np.isfinite(d).all():
        report.append("flow contains non-finite values")
    else:
        if d.size and np.abs(d[:, 0]).max() > w:
            report.append(f"|dx| exceeds field width {w}")
        if d.size and np.abs(d[:, 1]).max() > h:
            report.append(f"|dy| exceeds field height {h}")
    return report


def _validate_feature_map(fm: FeatureMap) -> list[str]:
    report = []
    d = fm.data
    if d.ndim != 3:
        report.append(f"feature map must be (C,H,W), got ndim={d.ndim}")
        return report
    if fm.scale_index < 0:
        report.append(f"scale_index must be >= 0, got {fm.scale_index}")
        return report
    bh, bw = fm.base_hw
    want_h = math.ceil(bh / 2 ** fm.scale_index)
    want_w = math.ceil(bw / 2 ** fm.scale_index)
    if d.shape[1] != want_h or d.shape[2] != want_w:
        report.append(
            f"level size {d.shape[1]}x{d.shape[2]} != ceil({bh}/2^{fm.scale_index}) x "
            f"ceil({bw}/2^{fm.scale_index}) = {want_h}x{want_w}"
        )
    if not np.isfinite(d).all():
        report.append("feature map contains non-finite values")
    return report


def _validate_pyramid(pyr: FeaturePyramid) -> list[str]:
    report = []
    if pyr.branch not in BRANCHES:
        report.append(f"branch {pyr.branch!r} not one of {BRANCHES}")
    if not pyr.levels:
        report.append("pyramid has no levels")
        return report
    for lv in pyr.levels:
        if not isinstance(lv, FeatureMap):
            report.append("pyramid levels must be FeatureMap instances")
            return report
        report.extend(_validate_feature_map(lv))
    idx = [lv.scale_index for lv in pyr.levels]
    if any(b - a != 1 for a, b in zip(idx, idx[1:])):
        report.append(f"scale indices must be consecutive increasing, got {idx}")
    bases = {lv.base_hw for lv in pyr.levels}
    if len(bases) > 1:
        report.append(f"levels disagree on base resolution: {sorted(bases)}")
    return report


def _validate_video(vt: VideoTensor) -> list[str]:
    report = []
    d = vt.data
    if d.ndim != 4:
        report.append(f"video must be (T,C,H,W), got ndim={d.ndim}")
        return report
    if d.shape[0] < 1:
        report.append("video must have at least one frame")
    if vt.fps <= 0:
        report.append(f"fps must be positive, got {vt.fps}")
    if not np.isfinite(d).all():
        report.append("video contains non-finite values")
    elif vt.pixel_space and d.size and (d.min() < -RANGE_ATOL or d.max() > 1.0 + RANGE_ATOL):
        report.append(f"pixel-space video outside [0,1]: range [{d.min():g},{d.max():g}]")
    return report


_VALIDATORS = {
    Frame: _validate_frame,
    FlowField: _validate_flow,
    FeatureMap: _validate_feature_map,
    FeaturePyramid: _validate_pyramid,
    VideoTensor: _validate_video,
}


def validate(obj) -> list[str]:
    """Return the list of violated invariants for any core type (empty = valid)."""
    fn = _VALIDATORS.get(type(obj))
    if fn is None:
        raise TypeError(f"validate() does not understand {type(obj).__name__}")
    return fn(obj)
