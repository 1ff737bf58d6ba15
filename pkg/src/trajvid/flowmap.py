"""Flow-driven feature warping and multi-scale fusion.

The control flow is resized to each pyramid scale (with displacement values
re-expressed in target-pixel units), each branch's features are forward-
splatted independently per target frame, and the warped pairs are fused by
two 3D convolutions and a SiLU into the conditioning stack handed to the
diffusion backbone.  Disocclusion holes stay zero; the accumulated splat
weights are exposed as validity maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trajvid import kernels
from trajvid.core import FeatureMap, FlowField
from trajvid.errors import ShapeMismatchError
from trajvid.imageops import bilinear_resize
from trajvid.injector import DualPyramids, InjectorConfig
from trajvid.nn import Conv2d, Conv3d, Module, ModuleList, Tensor
from trajvid.nn import functional as F

SPLAT_EPS = 1e-8


@dataclass(frozen=True)
class WarpedPyramidSequence:
    """Per scale: warped features (T-1,C_r,H_r,W_r) and splat-weight sums."""

    features: tuple[np.ndarray, ...]
    validity: tuple[np.ndarray, ...]
    scale_indices: tuple[int, ...]


@dataclass(frozen=True)
class ConditioningStack:
    """Fused multi-scale features, time length T-1, one array per scale."""

    features: tuple[np.ndarray, ...]
    scale_indices: tuple[int, ...]

    def __post_init__(self):
        for f in self.features:
            if not np.isfinite(np.asarray(f)).all():
                raise ShapeMismatchError("conditioning stack contains non-finite values")


def resize_flow(flow: FlowField, target_hw: tuple[int, int]) -> FlowField:
    """Bilinear spatial resize; dx scales by W_r/W, dy by H_r/H."""
    th, tw = target_hw
    if th < 1 or tw < 1:
        raise ValueError(f"target size must be >= 1, got {target_hw}")
    h, w = flow.height, flow.width
    if (th, tw) == (h, w):
        return FlowField(np.array(flow.data, copy=True), anchored=flow.anchored)
    out = np.empty((flow.data.shape[0], 2, th, tw), dtype=flow.data.dtype)
    for t in range(flow.data.shape[0]):
        res = bilinear_resize(np.asarray(flow.data[t]), th, tw)
        out[t, 0] = res[0] * (tw / w)
        out[t, 1] = res[1] * (th / h)
    return FlowField(out, anchored=flow.anchored)


def warp(features: FeatureMap, flow_frame: np.ndarray) -> tuple[FeatureMap, np.ndarray]:
    """Forward-splat one feature map along one flow frame.

    Accumulated values are weight-normalized where the weight sum reaches
    SPLAT_EPS and zero elsewhere; the raw weight sums come back as the
    validity map.
    """
    flow_frame = np.asarray(flow_frame)
    if flow_frame.shape != (2, *features.data.shape[1:]):
        raise ShapeMismatchError(
            f"flow frame {flow_frame.shape} does not match features {features.data.shape}"
        )
    feat = np.asarray(features.data)
    acc, wsum = kernels.splat_forward(feat, flow_frame.astype(feat.dtype))
    out = np.zeros_like(acc)
    ok = wsum >= SPLAT_EPS
    out[:, ok] = acc[:, ok] / wsum[ok]
    warped = FeatureMap(out, scale_index=features.scale_index, base_hw=features.base_hw)
    return warped, wsum


def _warp_branch(pyramid, flow: FlowField) -> WarpedPyramidSequence:
    feats, vals, scales = [], [], []
    t_minus_1 = flow.data.shape[0]
    for level in pyramid.levels:
        th, tw = level.data.shape[1], level.data.shape[2]
        level_flow = resize_flow(flow, (th, tw))
        warped_frames = np.empty((t_minus_1, *level.data.shape), dtype=level.data.dtype)
        validity = np.empty((t_minus_1, 1, th, tw), dtype=level.data.dtype)
        for t in range(t_minus_1):
            wmap, wsum = warp(level, level_flow.data[t])
            warped_frames[t] = wmap.data
            validity[t, 0] = wsum
        feats.append(warped_frames)
        vals.append(validity)
        scales.append(level.scale_index)
    return WarpedPyramidSequence(
        features=tuple(feats), validity=tuple(vals), scale_indices=tuple(scales)
    )


def warp_pyramids(pyrs: DualPyramids, flow: FlowField):
    """Warp both branches independently; no cross-branch terms anywhere."""
    rgb_seq = _warp_branch(pyrs.rgb, flow)
    depth_seq = _warp_branch(pyrs.depth, flow) if pyrs.depth is not None else None
    return rgb_seq, depth_seq


class MSFBlock(Module):
    """Two 3D convolutions then SiLU, fusing a (2C or C) input down to C channels."""

    def __init__(self, c_in: int, c_out: int, *, rng, dtype=np.float32):
        super().__init__()
        self.conv1 = Conv3d(c_in, c_out, (3, 3, 3), padding=(1, 1, 1), rng=rng, dtype=dtype)
        self.conv2 = Conv3d(c_out, c_out, (3, 3, 3), padding=(1, 1, 1), rng=rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return F.silu(self.conv2(self.conv1(x)))


class ProjectionFusion(Module):
    """MSF-ablated path: 1x1 projections to C_r, then a channel-wise average."""

    def __init__(self, c_r: int, dual: bool, *, rng, dtype=np.float32):
        super().__init__()
        self.dual = dual
        self.proj_rgb = Conv2d(c_r, c_r, 1, rng=rng, dtype=dtype)
        if dual:
            self.proj_depth = Conv2d(c_r, c_r, 1, rng=rng, dtype=dtype)

    def __call__(self, rgb: Tensor, depth: Tensor | None) -> Tensor:
        # operates on (N, C, H, W) slices; caller folds time into N
        a = self.proj_rgb(rgb)
        if not self.dual or depth is None:
            return a
        return F.mul(F.add(a, self.proj_depth(depth)), np.float32(0.5))


class DecoupledFlowMapper(Module):
    """Trainable fusion over warped feature sequences.

    Holds one fusion block per scale.  ``use_msf`` picks the 3D-conv fusion;
    otherwise the parameter-light projection average is used.
    """

    def __init__(self, config: InjectorConfig, use_msf: bool = True, *, rng, dtype=np.float32):
        super().__init__()
        self.config = config
        self.use_msf = use_msf
        self.dual = config.use_depth_branch
        blocks = []
        for c_r in config.channel_schedule:
            if use_msf:
                c_in = 2 * c_r if self.dual else c_r
                blocks.append(MSFBlock(c_in, c_r, rng=rng, dtype=dtype))
            else:
                blocks.append(ProjectionFusion(c_r, self.dual, rng=rng, dtype=dtype))
        self.fusers = ModuleList(blocks)

    def fuse_scale(self, idx: int, rgb_seq: Tensor, depth_seq: Tensor | None) -> Tensor:
        """rgb_seq/depth_seq: (B, T-1, C_r, H_r, W_r) -> fused (B, T-1, C_r, H_r, W_r)."""
        b, tm1, c, h, w = rgb_seq.shape
        if depth_seq is not None and depth_seq.shape != rgb_seq.shape:
            raise ShapeMismatchError(
                f"warped branches disagree on shape: {rgb_seq.shape} vs {depth_seq.shape}"
            )
        if self.use_msf:
            x = F.concat([rgb_seq, depth_seq], axis=2) if (self.dual and depth_seq is not None) else rgb_seq
            # (B,T-1,C,H,W) -> (B,C,T-1,H,W) for the 3D convolution
            x = F.transpose(x, (0, 2, 1, 3, 4))
            fused = self.fusers[idx](x)
            return F.transpose(fused, (0, 2, 1, 3, 4))
        rgb_flat = F.reshape(rgb_seq, (b * tm1, c, h, w))
        depth_flat = F.reshape(depth_seq, (b * tm1, c, h, w)) if depth_seq is not None else None
        fused = self.fusers[idx](rgb_flat, depth_flat)
        return F.reshape(fused, (b, tm1, c, h, w))

    def condition(self, rgb_levels: list[Tensor], depth_levels: list[Tensor] | None,
                  flows: np.ndarray) -> list[Tensor]:
        """Warp per (branch, scale, sample, frame) and fuse.

        rgb_levels: per scale (B, C_r, H_r, W_r) feature Tensors from the
        injector; flows: (B, T-1, 2, H, W) at input resolution.  Returns per
        scale (B, T-1, C_r, H_r, W_r) fused Tensors.
        """
        b, tm1 = flows.shape[0], flows.shape[1]
        h, w = flows.shape[3], flows.shape[4]
        out = []
        for idx, rgb_level in enumerate(rgb_levels):
            th, tw = rgb_level.shape[2], rgb_level.shape[3]
            scaled = np.empty((b, tm1, 2, th, tw), dtype=np.float32)
            for bi in range(b):
                scaled[bi] = resize_flow(FlowField(flows[bi]), (th, tw)).data
            rgb_w = _splat_sequence(rgb_level, scaled)
            depth_w = _splat_sequence(depth_levels[idx], scaled) if depth_levels is not None else None
            out.append(self.fuse_scale(idx, rgb_w, depth_w))
        return out


def _splat_sequence(level: Tensor, scaled_flows: np.ndarray) -> Tensor:
    """level (B,C,H,W) + flows (B,T-1,2,H,W) -> warped (B,T-1,C,H,W) Tensor."""
    b, tm1 = scaled_flows.shape[0], scaled_flows.shape[1]
    rows = []
    for bi in range(b):
        sample = F.narrow(level, 0, bi, 1)  # (1,C,H,W)
        sample = F.reshape(sample, level.shape[1:])
        frames = []
        for t in range(tm1):
            warped, _ = F.splat2d(sample, scaled_flows[bi, t], eps=SPLAT_EPS)
            frames.append(F.reshape(warped, (1, 1, *warped.shape)))
        rows.append(F.concat(frames, axis=1))
    return F.concat(rows, axis=0)


def msf_fuse(dfm: DecoupledFlowMapper, rgb_seq: WarpedPyramidSequence,
             depth_seq: WarpedPyramidSequence | None) -> ConditioningStack:
    """Core-type convenience wrapper around the trainable fusion."""
    from trajvid.nn.autograd import no_grad

    if depth_seq is not None and rgb_seq.scale_indices != depth_seq.scale_indices:
        raise ShapeMismatchError("warped sequences disagree on scale sets")
    fused = []
    with no_grad():
        for idx in range(len(rgb_seq.features)):
            rgb = Tensor(rgb_seq.features[idx][None])
            depth = Tensor(depth_seq.features[idx][None]) if depth_seq is not None else None
            fused.append(dfm.fuse_scale(idx, rgb, depth).data[0])
    return ConditioningStack(features=tuple(fused), scale_indices=rgb_seq.scale_indices)


def build_conditioning(injector, dfm: DecoupledFlowMapper, frames: Tensor,
                       depth: Tensor | None, seg: Tensor | None, flows: np.ndarray) -> list[Tensor]:
    """Injector + mapper end to end for a training batch."""
    rgb_levels, depth_levels = injector(frames, depth, seg)
    return dfm.condition(rgb_levels, depth_levels, flows)
