"""Full generation pipeline: injector + flow mapper + diffusion backbone.

Training optimizes the noise-prediction MSE.  With conditioning enabled the
injector, flow mapper and adapters receive gradients; the backbone core can
be frozen (the default for conditioned training, mirroring a pretrained
frozen denoiser).  Generation runs the strided ancestral sampler with the
conditioning stack built once from the input frame and control flow.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from trajvid.core import FlowField, Frame, VideoTensor
from trajvid.diffusion import (
    BackboneConfig,
    NoiseSchedule,
    VideoUNet,
    posterior_step,
    q_sample,
    sampling_timesteps,
)
from trajvid.errors import NonFiniteLossError
from trajvid.flowmap import DecoupledFlowMapper, build_conditioning
from trajvid.injector import DualSemanticInjector, InjectorConfig
from trajvid.nn import AdamW, Tensor
from trajvid.nn import functional as F
from trajvid.nn.autograd import no_grad
from trajvid.nn.checkpoint import load_checkpoint, save_checkpoint


@dataclass(frozen=True)
class PipelineConfig:
    height: int = 32
    width: int = 32
    num_frames: int = 8  # T, including the input frame
    seg_channels: int = 4  # padded one-hot channel count fed to the injector
    injector: InjectorConfig = field(
        default_factory=lambda: InjectorConfig(
            base_channels=16, channel_schedule=(16, 24, 32), seg_proj_channels=4
        )
    )
    use_msf: bool = True
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    num_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    sample_steps: int = 50
    lr: float = 2e-5
    weight_decay: float = 0.0
    batch_size: int = 4

    def __post_init__(self):
        if self.backbone.conditioning == "adapter":
            want_scales = self.injector.scale_indices
            if self.backbone.cond_scales != want_scales:
                raise ValueError(
                    f"backbone cond_scales {self.backbone.cond_scales} must match "
                    f"injector scales {want_scales}"
                )
            if self.backbone.cond_channels != self.injector.channel_schedule:
                raise ValueError(
                    f"backbone cond_channels {self.backbone.cond_channels} must match "
                    f"injector schedule {self.injector.channel_schedule}"
                )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d["injector"] = InjectorConfig(
            **{**d["injector"], "channel_schedule": tuple(d["injector"]["channel_schedule"])}
        )
        bb = dict(d["backbone"])
        for key in ("unet_channels", "cond_scales", "cond_channels"):
            bb[key] = tuple(bb[key])
        d["backbone"] = BackboneConfig(**bb)
        return cls(**d)


def make_config(height=32, width=32, num_frames=8, channel_schedule=(16, 24, 32),
                base_channels=16, unet_channels=(16, 32, 48, 64),
                use_segment_feature=True, use_depth_branch=True, use_msf=True,
                conditioning="adapter", frozen_core=False, num_steps=1000,
                sample_steps=50, lr=2e-5, batch_size=4, seg_channels=4,
                temb_dim=64) -> PipelineConfig:
    """Wire injector and backbone geometry consistently from one place."""
    injector = InjectorConfig(
        base_channels=base_channels,
        channel_schedule=tuple(channel_schedule),
        seg_proj_channels=max(2, seg_channels),
        use_segment_feature=use_segment_feature,
        use_depth_branch=use_depth_branch,
    )
    backbone = BackboneConfig(
        num_target_frames=num_frames - 1,
        channels=3,
        height=height,
        width=width,
        unet_channels=tuple(unet_channels),
        temb_dim=temb_dim,
        conditioning=conditioning,
        cond_scales=injector.scale_indices if conditioning == "adapter" else (),
        cond_channels=tuple(channel_schedule) if conditioning == "adapter" else (),
        first_frame_conditioning=True,
        frozen_core=frozen_core,
    )
    return PipelineConfig(
        height=height,
        width=width,
        num_frames=num_frames,
        seg_channels=seg_channels,
        injector=injector,
        use_msf=use_msf,
        backbone=backbone,
        num_steps=num_steps,
        sample_steps=sample_steps,
        lr=lr,
        batch_size=batch_size,
    )


def pad_onehot(seg: np.ndarray, k_channels: int) -> np.ndarray:
    """Pad (C,H,W) one-hot instance+background channels to a fixed count.

    Instances keep their leading positions; background always sits last.
    """
    c = seg.shape[0]
    if c == k_channels:
        return np.asarray(seg, dtype=np.float32)
    if c > k_channels:
        # merge surplus instances into the last kept instance channel
        merged = np.array(seg[: k_channels - 1], dtype=np.float32, copy=True)
        merged[-1] = np.sum(seg[k_channels - 2 : c - 1], axis=0).clip(0, 1)
        return np.concatenate([merged, seg[-1:]], axis=0).astype(np.float32)
    out = np.zeros((k_channels, *seg.shape[1:]), dtype=np.float32)
    out[: c - 1] = seg[: c - 1]
    out[-1] = seg[-1]
    return out


def records_to_batch(records, seg_channels: int) -> dict:
    """Stack clip records into training arrays."""
    video = np.stack([np.asarray(r.video.data, dtype=np.float32) for r in records])
    flow = np.stack([np.asarray(r.flow_gt.data, dtype=np.float32) for r in records])
    depth = np.stack([np.asarray(r.depth0.frame.data, dtype=np.float32) for r in records])
    seg = np.stack([pad_onehot(np.asarray(r.seg0.data), seg_channels) for r in records])
    return {"video": video, "flow": flow, "depth0": depth, "seg0": seg}


class GenerationPipeline:
    def __init__(self, config: PipelineConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.schedule = NoiseSchedule(config.num_steps, config.beta_start, config.beta_end)
        self.injector = DualSemanticInjector(
            config.injector, config.seg_channels, rng=rng, dtype=dtype
        )
        self.dfm = DecoupledFlowMapper(config.injector, use_msf=config.use_msf, rng=rng, dtype=dtype)
        self.unet = VideoUNet(config.backbone, rng=rng, dtype=dtype)

    # -- parameter bookkeeping -------------------------------------------------

    def named_parameters(self):
        for name, p in self.injector.named_parameters("dsi."):
            yield name, p
        for name, p in self.dfm.named_parameters("dfm."):
            yield name, p
        for name, p in self.unet.named_parameters("unet."):
            yield name, p

    def conditioning_parameters(self):
        """Injector + mapper + adapter parameters (the conditioned-training set)."""
        out = [(n, p) for n, p in self.injector.named_parameters("dsi.")]
        out += [(n, p) for n, p in self.dfm.named_parameters("dfm.")]
        out += [
            ("unet." + n, p)
            for n, p in self.unet.named_parameters()
            if n.startswith("adapters.")
        ]
        return out

    def core_parameters(self):
        return [("unet." + n, p) for n, p in self.unet.core_parameters()]

    def trainable_parameters(self, scope: str = "auto"):
        """Parameter sets by training stage.

        'core': backbone only (unconditional pretraining).
        'conditioning': injector + mapper + adapters (frozen-core stage).
        'all': everything.  'auto' resolves from the config: adapter
        conditioning with a frozen core trains only the conditioning set.
        """
        if scope == "auto":
            if self.config.backbone.conditioning == "adapter":
                scope = "conditioning" if self.config.backbone.frozen_core else "all"
            else:
                scope = "core"
        if scope == "core":
            return self.core_parameters()
        if scope == "conditioning":
            return self.conditioning_parameters()
        if scope == "all":
            return self.conditioning_parameters() + self.core_parameters()
        raise ValueError(f"unknown scope {scope!r}")

    def make_optimizer(self, scope: str = "auto", lr: float | None = None) -> AdamW:
        return AdamW(
            [p for _, p in self.trainable_parameters(scope)],
            lr=self.config.lr if lr is None else lr,
            weight_decay=self.config.weight_decay,
        )

    # -- training ----------------------------------------------------------------

    def _conditioning_from_batch(self, batch: dict) -> list[Tensor] | None:
        if self.config.backbone.conditioning != "adapter":
            return None
        frames = Tensor(batch["video"][:, 0].astype(self.dtype))
        depth = Tensor(batch["depth0"].astype(self.dtype)) if self.config.injector.use_depth_branch else None
        seg = Tensor(batch["seg0"].astype(self.dtype)) if self.config.injector.use_segment_feature else None
        return build_conditioning(self.injector, self.dfm, frames, depth, seg, batch["flow"])

    def train_step(self, batch: dict, optimizer: AdamW, rng: np.random.Generator,
                   conditioned: bool | None = None) -> float:
        """One noise-prediction step; returns the scalar loss.

        conditioned=False runs the unconditional objective even when the
        backbone carries adapters (the pretraining stage).
        """
        video = batch["video"].astype(self.dtype)
        b = video.shape[0]
        x0 = video[:, 1:] * 2.0 - 1.0
        frame0 = video[:, 0] * 2.0 - 1.0
        t = rng.integers(1, self.schedule.num_steps + 1, size=b)
        noise = rng.standard_normal(size=x0.shape).astype(self.dtype)
        x_t = q_sample(x0, t, noise, self.schedule)
        if conditioned is None:
            conditioned = self.config.backbone.conditioning == "adapter"
        cond = self._conditioning_from_batch(batch) if conditioned else None
        eps_hat = self.unet(Tensor(x_t), t, frame0, cond)
        loss = F.mse_loss(eps_hat, Tensor(noise))
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise NonFiniteLossError(f"training loss is {loss_val}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        return loss_val

    # -- sampling ----------------------------------------------------------------

    def conditioning_for_generation(self, frame0: Frame, flow: FlowField,
                                    providers) -> list[Tensor] | None:
        if self.config.backbone.conditioning != "adapter":
            return None
        seg = depth = None
        if self.config.injector.use_segment_feature:
            feats = providers.segment(frame0)
            aligned = feats.aligned_to(frame0.height, frame0.width)
            seg = Tensor(pad_onehot(aligned, self.config.seg_channels)[None].astype(self.dtype))
        if self.config.injector.use_depth_branch:
            dm = providers.estimate_depth(frame0)
            depth = Tensor(np.asarray(dm.frame.data)[None].astype(self.dtype))
        frames = Tensor(np.asarray(frame0.data)[None].astype(self.dtype))
        flows = np.asarray(flow.data, dtype=np.float32)[None]
        with no_grad():
            return build_conditioning(self.injector, self.dfm, frames, depth, seg, flows)

    def generate(self, frame0: Frame, flow: FlowField | None, providers,
                 seed: int = 0, steps: int | None = None,
                 cond: list[Tensor] | None = "auto") -> VideoTensor:
        """Sample T-1 frames conditioned on frame0 (and flow), prepend frame0."""
        cfg = self.config
        f = cfg.num_frames - 1
        rng = np.random.default_rng(seed)
        if cond == "auto":
            cond = (
                self.conditioning_for_generation(frame0, flow, providers)
                if flow is not None
                else None
            )
        f0 = (np.asarray(frame0.data, dtype=self.dtype) * 2.0 - 1.0)[None]
        x = rng.standard_normal(size=(1, f, 3, cfg.height, cfg.width)).astype(self.dtype)
        ts = sampling_timesteps(cfg.num_steps, steps or cfg.sample_steps)
        with no_grad():
            for i, t in enumerate(ts):
                t_prev = ts[i + 1] if i + 1 < len(ts) else 0
                eps = self.unet(Tensor(x), np.full(1, t), f0, cond).data
                z = rng.standard_normal(size=x.shape).astype(self.dtype) if t_prev > 0 else None
                x = posterior_step(x, t, t_prev, eps, self.schedule, z=z, clip_x0=1.0)
        frames = np.clip((x[0] + 1.0) / 2.0, 0.0, 1.0)
        video = np.concatenate([np.asarray(frame0.data, dtype=np.float32)[None], frames])
        return VideoTensor(video.astype(np.float32))

    # -- persistence ---------------------------------------------------------------

    def state_tensors(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def save(self, path, extra_meta: dict | None = None):
        flags = {
            "use_segment_feature": self.config.injector.use_segment_feature,
            "use_depth_branch": self.config.injector.use_depth_branch,
            "use_msf": self.config.use_msf,
        }
        meta = {"config": self.config.to_dict(), "ablation_flags": flags}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, self.state_tensors(), meta)

    def load_state(self, tensors: dict):
        own = dict(self.named_parameters())
        for name, arr in tensors.items():
            if name not in own:
                raise KeyError(f"checkpoint tensor {name} not in pipeline")
            own[name].data = np.asarray(arr).astype(own[name].data.dtype)

    @classmethod
    def from_checkpoint(cls, path, dtype=np.float32) -> "GenerationPipeline":
        tensors, meta = load_checkpoint(path)
        config = PipelineConfig.from_dict(meta["config"])
        pipe = cls(config, seed=0, dtype=dtype)
        pipe.load_state(tensors)
        return pipe


def with_frozen_core(config: PipelineConfig) -> PipelineConfig:
    """Mark the backbone core frozen for the conditioned training stage."""
    return replace(config, backbone=replace(config.backbone, frozen_core=True))
