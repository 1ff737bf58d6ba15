"""Denoising-diffusion backbone: schedule, video UNet, conditioning adapters.

The UNet is factorized: 2D convs over each frame (frames folded into the
batch) plus zero-initialized temporal 3x1x1 convs for cross-frame mixing.
Conditioning enters through zero-initialized 1x1 adapters added to encoder
activations at matching scales, so a freshly initialized model provably
ignores the conditioning stack.  The first frame conditions generation by
channel-concatenation onto the noisy input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from trajvid.errors import InvariantViolation, ScaleMismatchError, StepOutOfRangeError
from trajvid.nn import Conv2d, Conv3d, GroupNorm, Linear, Module, ModuleList, Tensor
from trajvid.nn import functional as F


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule with cumulative signal coefficients.

    alpha_bar is indexed 0..N with alpha_bar[0] = 1 (no noise applied).
    """

    num_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    betas: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        report = []
        if self.num_steps < 1:
            report.append(f"num_steps must be >= 1, got {self.num_steps}")
        if not (0 < self.beta_start < self.beta_end < 1):
            report.append(f"need 0 < beta_start < beta_end < 1, got ({self.beta_start}, {self.beta_end})")
        if report:
            raise InvariantViolation(report)
        betas = np.linspace(self.beta_start, self.beta_end, self.num_steps, dtype=np.float64)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        if not np.all(np.diff(self.alpha_bar) < 0):
            raise InvariantViolation(["alpha_bar must be strictly decreasing"])

    def check_step(self, t) -> None:
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.num_steps):
            raise StepOutOfRangeError(f"step {t} outside [1, {self.num_steps}]")


def q_sample(x0: np.ndarray, t, noise: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Forward process: sqrt(a_bar_t) x0 + sqrt(1 - a_bar_t) noise.

    t may be a scalar or a per-sample array matching x0's leading dim.
    """
    schedule.check_step(t)
    if noise.shape != x0.shape:
        raise InvariantViolation([f"noise shape {noise.shape} != x0 shape {x0.shape}"])
    ab = schedule.alpha_bar[np.asarray(t)]
    extra = (1,) * (x0.ndim - np.ndim(ab))
    ab = np.asarray(ab).reshape((-1,) + extra) if np.ndim(ab) else ab
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise).astype(x0.dtype)


def posterior_step(x_t: np.ndarray, t: int, t_prev: int, eps_hat: np.ndarray,
                   schedule: NoiseSchedule, z: np.ndarray | None = None,
                   clip_x0: float | None = None) -> np.ndarray:
    """One ancestral step t -> t_prev (DDPM posterior; strided steps allowed).

    With consecutive steps this is the standard DDPM ancestral update.  The
    x0 estimate is (x_t - sqrt(1-a_t) eps) / sqrt(a_t); optional clipping is
    applied to the estimate only.
    """
    schedule.check_step(t)
    if not (0 <= t_prev < t):
        raise StepOutOfRangeError(f"t_prev {t_prev} must be in [0, {t})")
    ab_t = schedule.alpha_bar[t]
    ab_prev = schedule.alpha_bar[t_prev]
    x0_hat = (x_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
    if clip_x0 is not None:
        x0_hat = np.clip(x0_hat, -clip_x0, clip_x0)
    var = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev)
    var = max(float(var), 0.0)
    coef_eps = np.sqrt(max(1.0 - ab_prev - var, 0.0))
    out = np.sqrt(ab_prev) * x0_hat + coef_eps * eps_hat
    if var > 0 and z is not None:
        out = out + np.sqrt(var) * z
    return out.astype(x_t.dtype)


def sampling_timesteps(num_steps: int, sample_steps: int) -> list[int]:
    """Strided descending step sequence from num_steps down to 1."""
    sample_steps = min(sample_steps, num_steps)
    ts = np.unique(np.linspace(1, num_steps, sample_steps).round().astype(int))[::-1]
    return [int(t) for t in ts]


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Standard transformer-style timestep embedding, (B,) -> (B, dim)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return emb


def _groups_for(channels: int) -> int:
    for g in (8, 4, 2, 1):
        if channels % g == 0:
            return g
    return 1


class ResBlock2d(Module):
    """Norm-SiLU-conv twice with a timestep bias; zero-init second conv."""

    def __init__(self, c_in: int, c_out: int, temb_dim: int, *, rng, dtype=np.float32):
        super().__init__()
        self.norm1 = GroupNorm(_groups_for(c_in), c_in, dtype=dtype)
        self.conv1 = Conv2d(c_in, c_out, 3, padding=1, rng=rng, dtype=dtype)
        self.temb_proj = Linear(temb_dim, c_out, rng=rng, dtype=dtype)
        self.norm2 = GroupNorm(_groups_for(c_out), c_out, dtype=dtype)
        self.conv2 = Conv2d(c_out, c_out, 3, padding=1, rng=rng, dtype=dtype, zero_init=True)
        self.skip = Conv2d(c_in, c_out, 1, rng=rng, dtype=dtype) if c_in != c_out else None

    def __call__(self, x: Tensor, temb_rows: Tensor) -> Tensor:
        """x: (N, C, H, W); temb_rows: (N, temb_dim) already aligned to N."""
        h = F.silu(self.norm1(x))
        h = self.conv1(h)
        bias = self.temb_proj(F.silu(temb_rows))
        h = F.add(h, F.reshape(bias, (bias.shape[0], bias.shape[1], 1, 1)))
        h = F.silu(self.norm2(h))
        h = self.conv2(h)
        skip = self.skip(x) if self.skip is not None else x
        return F.add(h, skip)


class TemporalMix(Module):
    """Residual zero-init 3x1x1 conv over the frame axis."""

    def __init__(self, channels: int, *, rng, dtype=np.float32):
        super().__init__()
        self.conv = Conv3d(channels, channels, (3, 1, 1), padding=(1, 0, 0), rng=rng,
                           dtype=dtype, zero_init=True)

    def __call__(self, x: Tensor, batch: int, frames: int) -> Tensor:
        n, c, h, w = x.shape
        y = F.reshape(x, (batch, frames, c, h, w))
        y = F.transpose(y, (0, 2, 1, 3, 4))
        y = self.conv(y)
        y = F.transpose(y, (0, 2, 1, 3, 4))
        return F.add(x, F.reshape(y, x.shape))


class ConditionAdapters(Module):
    """Zero-initialized 1x1 projections, one per conditioned scale."""

    def __init__(self, cond_channels: tuple[int, ...], unet_channels: tuple[int, ...],
                 scales: tuple[int, ...], *, rng, dtype=np.float32):
        super().__init__()
        self.scales = tuple(scales)
        projs = []
        for scale, c_cond in zip(self.scales, cond_channels):
            projs.append(Conv2d(c_cond, unet_channels[scale], 1, rng=rng, dtype=dtype, zero_init=True))
        self.projs = ModuleList(projs)

    def project(self, scale: int, cond_level: Tensor) -> Tensor:
        """cond_level: (B, F, C_c, H_r, W_r) -> (B*F, C_unet, H_r, W_r)."""
        idx = self.scales.index(scale)
        b, f, c, h, w = cond_level.shape
        flat = F.reshape(cond_level, (b * f, c, h, w))
        return self.projs[idx](flat)


@dataclass(frozen=True)
class BackboneConfig:
    """Geometry and wiring of the denoiser."""

    num_target_frames: int = 7
    channels: int = 3
    height: int = 32
    width: int = 32
    unet_channels: tuple[int, ...] = (16, 32, 48, 64)  # per stride 2^i
    temb_dim: int = 64
    conditioning: str = "adapter"  # or "none"
    cond_scales: tuple[int, ...] = (1, 2, 3)
    cond_channels: tuple[int, ...] = (16, 24, 32)
    first_frame_conditioning: bool = True
    frozen_core: bool = False

    def __post_init__(self):
        report = []
        if self.conditioning not in ("none", "adapter"):
            report.append(f"conditioning must be 'none' or 'adapter', got {self.conditioning!r}")
        if self.conditioning == "adapter":
            if len(self.cond_scales) != len(self.cond_channels):
                report.append("cond_scales and cond_channels must align")
            if any(s < 0 or s >= len(self.unet_channels) for s in self.cond_scales):
                report.append(
                    f"cond scales {self.cond_scales} must index into unet levels "
                    f"0..{len(self.unet_channels) - 1}"
                )
        if report:
            raise InvariantViolation(report)


class VideoUNet(Module):
    """Small frame-folded UNet with temporal mixing and optional adapters."""

    def __init__(self, config: BackboneConfig, *, rng, dtype=np.float32):
        super().__init__()
        self.config = config
        ch = config.unet_channels
        in_ch = config.channels + (config.channels if config.first_frame_conditioning else 0)
        self.stem = Conv2d(in_ch, ch[0], 3, padding=1, rng=rng, dtype=dtype)
        self.temb1 = Linear(config.temb_dim, config.temb_dim, rng=rng, dtype=dtype)
        self.temb2 = Linear(config.temb_dim, config.temb_dim, rng=rng, dtype=dtype)
        downs, enc_res, enc_temp = [], [], []
        for i in range(1, len(ch)):
            downs.append(Conv2d(ch[i - 1], ch[i], 3, stride=2, padding=1, rng=rng, dtype=dtype))
            enc_res.append(ResBlock2d(ch[i], ch[i], config.temb_dim, rng=rng, dtype=dtype))
            enc_temp.append(TemporalMix(ch[i], rng=rng, dtype=dtype))
        self.downs = ModuleList(downs)
        self.enc_res = ModuleList(enc_res)
        self.enc_temp = ModuleList(enc_temp)
        self.mid_res = ResBlock2d(ch[-1], ch[-1], config.temb_dim, rng=rng, dtype=dtype)
        self.mid_temp = TemporalMix(ch[-1], rng=rng, dtype=dtype)
        ups, dec_res, dec_temp = [], [], []
        for i in range(len(ch) - 1, 0, -1):
            ups.append(Conv2d(ch[i], ch[i - 1], 3, padding=1, rng=rng, dtype=dtype))
            dec_res.append(ResBlock2d(2 * ch[i - 1], ch[i - 1], config.temb_dim, rng=rng, dtype=dtype))
            dec_temp.append(TemporalMix(ch[i - 1], rng=rng, dtype=dtype))
        self.ups = ModuleList(ups)
        self.dec_res = ModuleList(dec_res)
        self.dec_temp = ModuleList(dec_temp)
        self.out_norm = GroupNorm(_groups_for(ch[0]), ch[0], dtype=dtype)
        self.out_conv = Conv2d(ch[0], config.channels, 3, padding=1, rng=rng, dtype=dtype,
                               zero_init=True)
        self.adapters = None
        if config.conditioning == "adapter":
            self.adapters = ConditionAdapters(
                config.cond_channels, ch, config.cond_scales, rng=rng, dtype=dtype
            )

    def __call__(self, x: Tensor, t: np.ndarray, frame0: np.ndarray | None,
                 cond: list[Tensor] | None) -> Tensor:
        """x: (B, F, C, H, W) noisy frames; t: (B,) steps; frame0: (B, C, H, W).

        cond: per conditioned scale, (B, F, C_r, H_r, W_r) Tensors (may be None).
        """
        cfg = self.config
        b, f = x.shape[0], x.shape[1]
        if cond is not None and self.adapters is None:
            raise ScaleMismatchError("conditioning passed to a backbone built without adapters")
        if cond is not None and len(cond) != len(cfg.cond_scales):
            raise ScaleMismatchError(
                f"conditioning stack has {len(cond)} scales, adapters expect {len(cfg.cond_scales)}"
            )
        if cfg.first_frame_conditioning:
            if frame0 is None:
                raise InvariantViolation(["first-frame conditioning enabled but frame0 missing"])
            f0 = np.broadcast_to(frame0[:, None], (b, f, *frame0.shape[1:]))
            x = F.concat([x, Tensor(np.ascontiguousarray(f0).astype(x.dtype))], axis=2)
        temb = sinusoidal_embedding(t, cfg.temb_dim).astype(x.dtype)
        temb = self.temb2(F.silu(self.temb1(Tensor(temb))))
        # align one embedding row per folded frame slice
        temb_rows = F.reshape(
            F.concat([F.reshape(temb, (b, 1, cfg.temb_dim))] * f, axis=1),
            (b * f, cfg.temb_dim),
        )
        n = b * f
        h = F.reshape(x, (n, x.shape[2], x.shape[3], x.shape[4]))
        h = self.stem(h)
        skips = [h]
        for i in range(len(self.downs)):
            h = self.downs[i](h)
            h = self.enc_res[i](h, temb_rows)
            h = self.enc_temp[i](h, b, f)
            scale = i + 1
            if cond is not None and scale in cfg.cond_scales:
                h = F.add(h, self.adapters.project(scale, cond[cfg.cond_scales.index(scale)]))
            skips.append(h)
        h = self.mid_res(h, temb_rows)
        h = self.mid_temp(h, b, f)
        for j in range(len(self.ups)):
            h = F.upsample_nearest2d(h, 2)
            h = self.ups[j](h)
            skip = skips[len(self.downs) - 1 - j]
            if skip.shape[2:] != h.shape[2:]:
                h = F.narrow(F.narrow(h, 2, 0, skip.shape[2]), 3, 0, skip.shape[3])
            h = self.dec_res[j](F.concat([h, skip], axis=1), temb_rows)
            h = self.dec_temp[j](h, b, f)
        h = F.silu(self.out_norm(h))
        h = self.out_conv(h)
        return F.reshape(h, (b, f, cfg.channels, x.shape[3], x.shape[4]))

    def core_parameters(self):
        """Backbone parameters excluding the conditioning adapters."""
        return [
            (name, p)
            for name, p in self.named_parameters()
            if not name.startswith("adapters.")
        ]
