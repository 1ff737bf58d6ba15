"""Dual-branch feature extraction with segmentation injection.

Two structurally identical but weight-independent branches process the RGB
frame and the depth map.  Each branch fuses projected segmentation channels
into its input, then encodes a pyramid by stacked stride-2 residual blocks.
The base pyramid level sits at stride 2 (scale index 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trajvid.core import FeatureMap, FeaturePyramid
from trajvid.errors import InvariantViolation, MisalignedResolutionError
from trajvid.nn import Conv2d, Module, ModuleList, Tensor
from trajvid.nn import functional as F
from trajvid.nn.autograd import no_grad
from trajvid.providers import DepthMap, SegmentationFeatures

BASE_SCALE_INDEX = 1


@dataclass(frozen=True)
class InjectorConfig:
    base_channels: int = 32
    channel_schedule: tuple[int, ...] = (64, 128, 256)
    seg_proj_channels: int = 8
    use_segment_feature: bool = True
    use_depth_branch: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channel_schedule", tuple(self.channel_schedule))
        report = []
        if not (2 <= self.num_scales <= 5):
            report.append(f"num_scales must be in [2,5], got {self.num_scales}")
        if any(c <= 0 for c in self.channel_schedule) or self.base_channels <= 0 or self.seg_proj_channels <= 0:
            report.append("all channel counts must be positive")
        if report:
            raise InvariantViolation(report)

    @property
    def num_scales(self) -> int:
        return len(self.channel_schedule)

    @property
    def scale_indices(self) -> tuple[int, ...]:
        return tuple(range(BASE_SCALE_INDEX, BASE_SCALE_INDEX + self.num_scales))


@dataclass(frozen=True)
class DualPyramids:
    """RGB pyramid plus an optional depth pyramid sharing its geometry."""

    rgb: FeaturePyramid
    depth: FeaturePyramid | None = None

    def __post_init__(self):
        if self.depth is not None:
            if self.rgb.scale_indices != self.depth.scale_indices:
                raise InvariantViolation(["rgb and depth pyramids disagree on scale indices"])
            for a, b in zip(self.rgb.levels, self.depth.levels):
                if a.data.shape != b.data.shape:
                    raise InvariantViolation(["rgb and depth pyramid levels disagree on shape"])


class SegInject(Module):
    """phi: project seg channels, concatenate with the input image, mix 3x3 + SiLU."""

    def __init__(self, in_channels: int, seg_channels: int, config: InjectorConfig, *, rng, dtype=np.float32):
        super().__init__()
        self.use_seg = config.use_segment_feature
        if self.use_seg:
            self.seg_proj = Conv2d(seg_channels, config.seg_proj_channels, 1, rng=rng, dtype=dtype)
            mix_in = in_channels + config.seg_proj_channels
        else:
            mix_in = in_channels
        self.mix = Conv2d(mix_in, config.base_channels, 3, padding=1, rng=rng, dtype=dtype)

    def __call__(self, image: Tensor, seg: Tensor | None) -> Tensor:
        if self.use_seg:
            if seg is None:
                raise MisalignedResolutionError("segmentation features required but not provided")
            if seg.shape[2:] != image.shape[2:]:
                raise MisalignedResolutionError(
                    f"segmentation {seg.shape[2:]} does not match frame {image.shape[2:]}"
                )
            x = F.concat([image, self.seg_proj(seg)], axis=1)
        else:
            x = image
        return F.silu(self.mix(x))


class DownBlock(Module):
    """Stride-2 conv, SiLU, then a residual 3x3 refinement."""

    def __init__(self, c_in: int, c_out: int, *, rng, dtype=np.float32):
        super().__init__()
        self.down = Conv2d(c_in, c_out, 3, stride=2, padding=1, rng=rng, dtype=dtype)
        self.refine = Conv2d(c_out, c_out, 3, padding=1, rng=rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        h = F.silu(self.down(x))
        return F.add(h, self.refine(h))


class PyramidEncoder(Module):
    def __init__(self, config: InjectorConfig, *, rng, dtype=np.float32):
        super().__init__()
        chans = (config.base_channels,) + config.channel_schedule
        self.blocks = ModuleList(
            [DownBlock(chans[i], chans[i + 1], rng=rng, dtype=dtype) for i in range(config.num_scales)]
        )

    def __call__(self, x: Tensor) -> list[Tensor]:
        levels = []
        h = x
        for block in self.blocks:
            h = block(h)
            levels.append(h)
        return levels


class DualSemanticInjector(Module):
    """Both branches end to end: frame + depth + seg -> two feature pyramids."""

    def __init__(self, config: InjectorConfig, seg_channels: int, *, rng, dtype=np.float32):
        super().__init__()
        self.config = config
        self.seg_channels = seg_channels
        self.rgb_inject = SegInject(3, seg_channels, config, rng=rng, dtype=dtype)
        self.rgb_encoder = PyramidEncoder(config, rng=rng, dtype=dtype)
        if config.use_depth_branch:
            self.depth_inject = SegInject(3, seg_channels, config, rng=rng, dtype=dtype)
            self.depth_encoder = PyramidEncoder(config, rng=rng, dtype=dtype)

    def inject_rgb(self, frames: Tensor, seg: Tensor | None) -> Tensor:
        return self.rgb_inject(frames, seg)

    def encode_rgb(self, injected: Tensor) -> list[Tensor]:
        return self.rgb_encoder(injected)

    def __call__(self, frames: Tensor, depth: Tensor | None, seg: Tensor | None):
        """frames (B,3,H,W), depth (B,1,H,W), seg (B,C_s,H,W) -> (rgb levels, depth levels)."""
        rgb_levels = self.rgb_encoder(self.rgb_inject(frames, seg))
        depth_levels = None
        if self.config.use_depth_branch:
            if depth is None:
                raise MisalignedResolutionError("depth branch enabled but no depth input given")
            depth3 = F.concat([depth, depth, depth], axis=1)
            depth_levels = self.depth_encoder(self.depth_inject(depth3, seg))
        return rgb_levels, depth_levels

    def forward_record(self, frame, depth: DepthMap | None, seg: SegmentationFeatures | None) -> DualPyramids:
        """Single-sample, core-type interface used outside the training loop."""
        h, w = frame.height, frame.width
        seg_arr = None
        if self.config.use_segment_feature:
            if seg is None:
                raise MisalignedResolutionError("segmentation features required but not provided")
            seg_arr = Tensor(seg.aligned_to(h, w)[None].astype(frame.data.dtype))
        depth_arr = None
        if self.config.use_depth_branch:
            if depth is None:
                raise MisalignedResolutionError("depth branch enabled but no depth map given")
            depth_arr = Tensor(np.asarray(depth.frame.data)[None].astype(frame.data.dtype))
        with no_grad():
            rgb_levels, depth_levels = self(
                Tensor(np.asarray(frame.data)[None]), depth_arr, seg_arr
            )
        rgb_pyr = self._to_pyramid(rgb_levels, (h, w), "rgb")
        depth_pyr = self._to_pyramid(depth_levels, (h, w), "depth") if depth_levels else None
        return DualPyramids(rgb=rgb_pyr, depth=depth_pyr)

    def _to_pyramid(self, levels: list[Tensor], base_hw, branch: str) -> FeaturePyramid:
        maps = [
            FeatureMap(lv.data[0], scale_index=BASE_SCALE_INDEX + i, base_hw=base_hw)
            for i, lv in enumerate(levels)
        ]
        return FeaturePyramid(tuple(maps), branch=branch)
