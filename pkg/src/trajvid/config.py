"""Run configuration: one nested YAML file, defaults for every field.

Unknown keys are hard errors (a silently ignored typo in an ablation flag
would corrupt an experiment).  Sections mirror the pipeline: data, model,
ablation, train, trajectory, service.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from trajvid.errors import ConfigError


@dataclass
class DataSection:
    root: str = "runs/data"
    count: int = 500
    height: int = 32
    width: int = 32
    num_frames: int = 8
    min_shapes: int = 1
    max_shapes: int = 2
    speed_limit: int = 2
    min_radius: float = 4.0
    max_radius: float = 9.0
    occlusion_free: bool = False
    val_fraction: float = 0.2


@dataclass
class ModelSection:
    base_channels: int = 16
    channel_schedule: list = field(default_factory=lambda: [16, 24, 32])
    seg_channels: int = 4
    unet_channels: list = field(default_factory=lambda: [16, 32, 48, 64])
    temb_dim: int = 64
    num_steps: int = 1000
    sample_steps: int = 50


@dataclass
class AblationSection:
    use_segment_feature: bool = True
    use_depth_branch: bool = True
    use_msf: bool = True


@dataclass
class TrainSection:
    iterations: int = 3000
    pretrain_iterations: int = 2000
    batch_size: int = 4
    lr: float = 2e-5
    weight_decay: float = 0.0
    checkpoint_every: int = 500
    out_dir: str = "runs/train"
    frozen_core: bool = True


@dataclass
class TrajectorySection:
    sigma: float | None = None
    support_radius: float | None = None


@dataclass
class ServiceSection:
    host: str = "127.0.0.1"
    port: int = 8008
    checkpoint: str | None = None


@dataclass
class RunConfig:
    seed: int = 0
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    ablation: AblationSection = field(default_factory=AblationSection)
    train: TrainSection = field(default_factory=TrainSection)
    trajectory: TrajectorySection = field(default_factory=TrajectorySection)
    service: ServiceSection = field(default_factory=ServiceSection)

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "data": DataSection,
    "model": ModelSection,
    "ablation": AblationSection,
    "train": TrainSection,
    "trajectory": TrajectorySection,
    "service": ServiceSection,
}


def _apply_section(obj, payload: dict, path: str):
    known = {f.name for f in fields(obj)}
    for key, value in payload.items():
        if key not in known:
            raise ConfigError(f"unknown key {path}.{key}" if path else f"unknown key {key}")
        setattr(obj, key, value)


def config_from_dict(payload: dict) -> RunConfig:
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise ConfigError(f"config root must be a mapping, got {type(payload).__name__}")
    cfg = RunConfig()
    for key, value in payload.items():
        if key == "seed":
            cfg.seed = int(value)
            continue
        if key not in _SECTIONS:
            raise ConfigError(f"unknown key {key}")
        if value is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"section {key} must be a mapping")
        _apply_section(getattr(cfg, key), value, key)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    payload = yaml.safe_load(path.read_text())
    return config_from_dict(payload)


def pipeline_config_from_run(cfg: RunConfig, conditioning: str = "adapter"):
    from trajvid.pipeline import make_config

    return make_config(
        height=cfg.data.height,
        width=cfg.data.width,
        num_frames=cfg.data.num_frames,
        channel_schedule=tuple(cfg.model.channel_schedule),
        base_channels=cfg.model.base_channels,
        unet_channels=tuple(cfg.model.unet_channels),
        use_segment_feature=cfg.ablation.use_segment_feature,
        use_depth_branch=cfg.ablation.use_depth_branch,
        use_msf=cfg.ablation.use_msf,
        conditioning=conditioning,
        frozen_core=cfg.train.frozen_core,
        num_steps=cfg.model.num_steps,
        sample_steps=cfg.model.sample_steps,
        lr=cfg.train.lr,
        batch_size=cfg.train.batch_size,
        seg_channels=cfg.model.seg_channels,
        temb_dim=cfg.model.temb_dim,
    )


def scene_distribution_from_run(cfg: RunConfig):
    from trajvid.data import SceneDistribution

    return SceneDistribution(
        height=cfg.data.height,
        width=cfg.data.width,
        num_frames=cfg.data.num_frames,
        min_shapes=cfg.data.min_shapes,
        max_shapes=cfg.data.max_shapes,
        speed_limit=cfg.data.speed_limit,
        min_radius=cfg.data.min_radius,
        max_radius=cfg.data.max_radius,
        occlusion_free=cfg.data.occlusion_free,
    )
