"""Synthetic moving-shape clips with exact ground truth, plus real-clip ingestion.

The renderer moves rigid textured shapes over a static textured background
with integer per-frame velocities.  That choice makes every piece of ground
truth exact: cumulative flow is velocity times frame index, occlusion is
painter's order over distinct depth planes, and warping frame 0 by the true
flow reproduces later frames bit-for-bit on unoccluded pixels.

On-disk clip layout (one directory per clip):

    frame_0000.png ... frame_{T-1:04d}.png   8-bit RGB
    flow_0000.flo ... flow_{T-2:04d}.flo     Middlebury format
    depth0.png                               16-bit grayscale, inverse depth
    seg0.png                                 8-bit instance ids (0=background)
    meta.json                                provenance and geometry record
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from trajvid.core import FlowField, Frame, VideoTensor
from trajvid.errors import FileUnreadableError, InvariantViolation, TooFewFramesError
from trajvid.floio import read_flow_sequence, write_flow_sequence
from trajvid.imageops import bilinear_resize
from trajvid.pngio import (
    read_png_gray16,
    read_png_index,
    read_png_rgb,
    write_png_gray16,
    write_png_index,
    write_png_rgb,
)
from trajvid.providers import DepthMap, SegmentationFeatures

BACKGROUND_DEPTH = 0.15
RESIZE_POLICY_ID = "long-side-bilinear-pad-sym-bottom"

SHAPE_KINDS = ("ellipse", "capsule", "blob")


@dataclass(frozen=True)
class ShapeSpec:
    """One rigid textured shape on its own depth plane."""

    kind: str
    center: tuple[float, float]  # (x, y) at t=0
    size: tuple[float, float]  # (rx, ry) semi-axes; capsule uses rx=half-length, ry=radius
    depth: float  # inverse depth in (0,1], larger = nearer
    velocity: tuple[int, int]  # integer pixels per frame
    texture_seed: int
    angle: float = 0.0

    def center_at(self, t: int) -> tuple[float, float]:
        return (self.center[0] + self.velocity[0] * t, self.center[1] + self.velocity[1] * t)


@dataclass(frozen=True)
class SyntheticScene:
    seed: int
    height: int
    width: int
    num_frames: int
    shapes: tuple[ShapeSpec, ...]
    background_seed: int = 0
    background_depth: float = BACKGROUND_DEPTH

    def __post_init__(self):
        report = []
        if self.num_frames < 2:
            report.append(f"num_frames must be >= 2, got {self.num_frames}")
        if not self.shapes:
            report.append("scene needs at least one shape")
        depths = [s.depth for s in self.shapes]
        if len(set(depths)) != len(depths):
            report.append("shape depth planes must be distinct")
        for i, s in enumerate(self.shapes):
            if s.kind not in SHAPE_KINDS:
                report.append(f"shape {i}: unknown kind {s.kind!r}")
            x, y = s.center
            if not (0 <= x < self.width and 0 <= y < self.height):
                report.append(f"shape {i}: center {s.center} outside canvas at t=0")
        if report:
            raise InvariantViolation(report)


@dataclass
class ClipRecord:
    """One training/evaluation clip with aligned ground truth."""

    video: VideoTensor
    flow_gt: FlowField
    depth0: DepthMap
    seg0: SegmentationFeatures
    metadata: dict
    flow_valid: np.ndarray | None = None  # (T-1,1,H,W): flow supervisable at target time
    consistency_mask: np.ndarray | None = None  # (T-1,1,H,W): warp reproduces target here

    def __post_init__(self):
        t = self.video.num_frames
        if self.flow_gt.data.shape[0] != t - 1:
            raise InvariantViolation(
                [f"flow frame count {self.flow_gt.data.shape[0]} != T-1 = {t - 1}"]
            )
        hw = self.video.data.shape[2:]
        if self.flow_gt.data.shape[2:] != hw:
            raise InvariantViolation(["flow and video disagree on spatial size"])
        if self.depth0.data.shape != hw:
            raise InvariantViolation(["depth0 and video disagree on spatial size"])

    @property
    def frame0(self) -> Frame:
        return Frame(self.video.data[0], color_space="rgb")


def _shape_mask(spec: ShapeSpec, cx: float, cy: float, h: int, w: int) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w]
    dx = xs - cx
    dy = ys - cy
    if spec.angle:
        ca, sa = math.cos(spec.angle), math.sin(spec.angle)
        dx, dy = ca * dx + sa * dy, -sa * dx + ca * dy
    rx, ry = spec.size
    if spec.kind == "ellipse":
        return (dx / rx) ** 2 + (dy / ry) ** 2 <= 1.0
    if spec.kind == "capsule":
        # segment of half-length rx along local x, radius ry
        t = np.clip(dx, -rx, rx)
        return (dx - t) ** 2 + dy ** 2 <= ry ** 2
    # blob: radius modulated by angular harmonics seeded from the texture seed
    rng = np.random.default_rng(spec.texture_seed ^ 0x5EED)
    amp1, amp2 = rng.uniform(0.08, 0.22, size=2)
    ph1, ph2 = rng.uniform(0, 2 * math.pi, size=2)
    theta = np.arctan2(dy / ry, dx / rx)
    radius = 1.0 + amp1 * np.sin(3 * theta + ph1) + amp2 * np.sin(5 * theta + ph2)
    return (dx / rx) ** 2 + (dy / ry) ** 2 <= radius ** 2


def _shape_texture(spec: ShapeSpec, cx: float, cy: float, h: int, w: int) -> np.ndarray:
    """Smooth RGB pattern in shape-local coordinates, so it rides with the shape."""
    rng = np.random.default_rng(spec.texture_seed)
    base = rng.uniform(0.35, 0.9, size=3)
    freq = rng.uniform(0.08, 0.25, size=(3, 2))
    phase = rng.uniform(0, 2 * math.pi, size=3)
    amp = rng.uniform(0.05, 0.18, size=3)
    ys, xs = np.mgrid[0:h, 0:w]
    lx = xs - cx
    ly = ys - cy
    tex = np.empty((3, h, w), dtype=np.float64)
    for ch in range(3):
        tex[ch] = base[ch] + amp[ch] * np.sin(freq[ch, 0] * lx + freq[ch, 1] * ly + phase[ch])
    return np.clip(tex, 0.0, 1.0)


def _background(scene: SyntheticScene) -> np.ndarray:
    rng = np.random.default_rng(scene.background_seed)
    base = rng.uniform(0.05, 0.25, size=3)
    freq = rng.uniform(0.02, 0.1, size=(3, 2))
    phase = rng.uniform(0, 2 * math.pi, size=3)
    amp = rng.uniform(0.02, 0.08, size=3)
    ys, xs = np.mgrid[0 : scene.height, 0 : scene.width]
    img = np.empty((3, scene.height, scene.width), dtype=np.float64)
    for ch in range(3):
        img[ch] = base[ch] + amp[ch] * np.sin(freq[ch, 0] * xs + freq[ch, 1] * ys + phase[ch])
    return np.clip(img, 0.0, 1.0)


def render_scene(scene: SyntheticScene) -> ClipRecord:
    """Rasterize a scene into frames plus exact flow/depth/segmentation truth."""
    h, w, t_total = scene.height, scene.width, scene.num_frames
    order = np.argsort([s.depth for s in scene.shapes])  # far -> near painter's order
    bg = _background(scene)

    frames = np.empty((t_total, 3, h, w), dtype=np.float64)
    # owner[t] = index of the visible surface per pixel (-1 = background)
    owner = np.full((t_total, h, w), -1, dtype=np.int64)
    for t in range(t_total):
        canvas = bg.copy()
        for si in order:
            spec = scene.shapes[si]
            cx, cy = spec.center_at(t)
            mask = _shape_mask(spec, cx, cy, h, w)
            if not mask.any():
                continue
            tex = _shape_texture(spec, cx, cy, h, w)
            canvas[:, mask] = tex[:, mask]
            owner[t][mask] = si
        frames[t] = canvas

    flow = np.zeros((t_total - 1, 2, h, w), dtype=np.float32)
    flow_valid = np.zeros((t_total - 1, 1, h, w), dtype=np.float32)
    consistency = np.zeros((t_total - 1, 1, h, w), dtype=np.float32)
    ys, xs = np.mgrid[0:h, 0:w]
    for t in range(t_total - 1):
        # displacement of the surface visible at frame 0, zeroed where the
        # moved point is occluded or out of bounds at frame t+1
        vx = np.zeros((h, w), dtype=np.int64)
        vy = np.zeros((h, w), dtype=np.int64)
        for si, spec in enumerate(scene.shapes):
            sel = owner[0] == si
            vx[sel] = spec.velocity[0] * (t + 1)
            vy[sel] = spec.velocity[1] * (t + 1)
        dest_x = xs + vx
        dest_y = ys + vy
        in_bounds = (dest_x >= 0) & (dest_x < w) & (dest_y >= 0) & (dest_y < h)
        dest_owner = np.full((h, w), -2, dtype=np.int64)
        dest_owner[in_bounds] = owner[t + 1][dest_y[in_bounds], dest_x[in_bounds]]
        visible = in_bounds & (dest_owner == owner[0])
        flow[t, 0][visible] = vx[visible]
        flow[t, 1][visible] = vy[visible]
        flow_valid[t, 0] = visible

        # a target pixel is warp-consistent when exactly one source lands on
        # it under the recorded flow (zeroed pixels land on themselves) and
        # that source is the surface actually visible there
        eff_x = (xs + flow[t, 0].astype(np.int64)).ravel()
        eff_y = (ys + flow[t, 1].astype(np.int64)).ravel()
        dest_flat = eff_y * w + eff_x
        hits = np.bincount(dest_flat, minlength=h * w)
        src_owner_sum = np.bincount(dest_flat, weights=owner[0].ravel().astype(np.float64), minlength=h * w)
        single = hits == 1
        landed_owner = np.full(h * w, -3, dtype=np.int64)
        landed_owner[single] = np.rint(src_owner_sum[single]).astype(np.int64)
        consistency[t, 0] = (single & (landed_owner == owner[t + 1].ravel())).reshape(h, w)

    depth0 = np.full((h, w), scene.background_depth, dtype=np.float32)
    for si, spec in enumerate(scene.shapes):
        depth0[owner[0] == si] = spec.depth
    seg0 = np.zeros((len(scene.shapes) + 1, h, w), dtype=np.float32)
    for si in range(len(scene.shapes)):
        seg0[si][owner[0] == si] = 1.0
    seg0[-1][owner[0] == -1] = 1.0

    metadata = {
        "source": "synthetic",
        "seed": scene.seed,
        "height": h,
        "width": w,
        "num_frames": t_total,
        "scene": scene_to_json(scene),
    }
    return ClipRecord(
        video=VideoTensor(frames.astype(np.float32)),
        flow_gt=FlowField(flow),
        depth0=DepthMap(frame=Frame(depth0[None], color_space="depth"), provenance="synthetic_ground_truth"),
        seg0=SegmentationFeatures(seg0, provenance="synthetic_ground_truth"),
        metadata=metadata,
        flow_valid=flow_valid,
        consistency_mask=consistency,
    )


def scene_to_json(scene: SyntheticScene) -> dict:
    return {
        "seed": scene.seed,
        "height": scene.height,
        "width": scene.width,
        "num_frames": scene.num_frames,
        "background_seed": scene.background_seed,
        "background_depth": scene.background_depth,
        "shapes": [
            {
                "kind": s.kind,
                "center": list(s.center),
                "size": list(s.size),
                "depth": s.depth,
                "velocity": list(s.velocity),
                "texture_seed": s.texture_seed,
                "angle": s.angle,
            }
            for s in scene.shapes
        ],
    }


def scene_from_json(payload: dict) -> SyntheticScene:
    shapes = tuple(
        ShapeSpec(
            kind=s["kind"],
            center=tuple(s["center"]),
            size=tuple(s["size"]),
            depth=s["depth"],
            velocity=tuple(int(v) for v in s["velocity"]),
            texture_seed=int(s["texture_seed"]),
            angle=s.get("angle", 0.0),
        )
        for s in payload["shapes"]
    )
    return SyntheticScene(
        seed=int(payload["seed"]),
        height=int(payload["height"]),
        width=int(payload["width"]),
        num_frames=int(payload["num_frames"]),
        shapes=shapes,
        background_seed=int(payload.get("background_seed", 0)),
        background_depth=float(payload.get("background_depth", BACKGROUND_DEPTH)),
    )


@dataclass(frozen=True)
class SceneDistribution:
    """Sampling ranges for random scenes."""

    height: int = 32
    width: int = 32
    num_frames: int = 8
    min_shapes: int = 1
    max_shapes: int = 2
    speed_limit: int = 2  # velocities drawn uniformly from integers in [-limit, limit]
    min_radius: float = 4.0
    max_radius: float = 9.0
    occlusion_free: bool = False

    def sample(self, rng: np.random.Generator, seed: int) -> SyntheticScene:
        for _ in range(200):
            n = int(rng.integers(self.min_shapes, self.max_shapes + 1))
            shapes = []
            depths = rng.permutation(np.linspace(0.4, 0.95, 8))[:n]
            for i in range(n):
                kind = SHAPE_KINDS[int(rng.integers(0, len(SHAPE_KINDS)))]
                rx = float(rng.uniform(self.min_radius, self.max_radius))
                ry = float(rng.uniform(self.min_radius, self.max_radius))
                if kind == "capsule":
                    ry = min(ry, rx)
                margin = max(rx, ry) + 1
                cx = float(rng.uniform(margin, self.width - 1 - margin))
                cy = float(rng.uniform(margin, self.height - 1 - margin))
                vx = int(rng.integers(-self.speed_limit, self.speed_limit + 1))
                vy = int(rng.integers(-self.speed_limit, self.speed_limit + 1))
                shapes.append(
                    ShapeSpec(
                        kind=kind,
                        center=(cx, cy),
                        size=(rx, ry),
                        depth=float(depths[i]),
                        velocity=(vx, vy),
                        texture_seed=int(rng.integers(0, 2 ** 31)),
                        angle=float(rng.uniform(0, math.pi)),
                    )
                )
            scene = SyntheticScene(
                seed=seed,
                height=self.height,
                width=self.width,
                num_frames=self.num_frames,
                shapes=tuple(shapes),
                background_seed=int(rng.integers(0, 2 ** 31)),
            )
            if not self.occlusion_free or _shapes_never_meet(scene):
                return scene
        raise RuntimeError("could not sample an occlusion-free scene in 200 tries")


def _shapes_never_meet(scene: SyntheticScene) -> bool:
    # conservative bounding-circle check across all frames (blobs bulge ~30%)
    for t in range(scene.num_frames):
        for i in range(len(scene.shapes)):
            for j in range(i + 1, len(scene.shapes)):
                a, b = scene.shapes[i], scene.shapes[j]
                ax, ay = a.center_at(t)
                bx, by = b.center_at(t)
                ra = max(a.size) * 1.3 + 1
                rb = max(b.size) * 1.3 + 1
                if math.hypot(ax - bx, ay - by) <= ra + rb:
                    return False
    return True


class SyntheticDataset:
    """Deterministic sequence of rendered scenes with a stable train/val split."""

    def __init__(self, count: int, distribution: SceneDistribution, seed: int,
                 val_fraction: float = 0.2):
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        self.distribution = distribution
        self.seed = seed
        master = np.random.default_rng(seed)
        self.scenes = [distribution.sample(master, seed * 1_000_003 + i) for i in range(count)]
        perm = np.random.default_rng(seed ^ 0xA5A5A5).permutation(count)
        n_val = int(round(count * val_fraction))
        self.val_indices = sorted(int(i) for i in perm[:n_val])
        self.train_indices = sorted(int(i) for i in perm[n_val:])
        self._cache: dict[int, ClipRecord] = {}

    def __len__(self):
        return len(self.scenes)

    def record(self, index: int) -> ClipRecord:
        if index not in self._cache:
            self._cache[index] = render_scene(self.scenes[index])
        return self._cache[index]

    def __iter__(self):
        return (self.record(i) for i in range(len(self)))

    def train_records(self):
        return [self.record(i) for i in self.train_indices]

    def val_records(self):
        return [self.record(i) for i in self.val_indices]


def make_dataset(count: int, distribution: SceneDistribution | None = None,
                 seed: int = 0, val_fraction: float = 0.2) -> SyntheticDataset:
    return SyntheticDataset(count, distribution or SceneDistribution(), seed, val_fraction)


def save_clip(record: ClipRecord, clip_dir):
    """Write the documented on-disk layout atomically (temp dir + rename)."""
    clip_dir = Path(clip_dir)
    clip_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".clip-", dir=clip_dir.parent))
    try:
        video = record.video.data
        for t in range(video.shape[0]):
            write_png_rgb(tmp / f"frame_{t:04d}.png", video[t])
        write_flow_sequence(tmp, record.flow_gt.data)
        write_png_gray16(tmp / "depth0.png", record.depth0.data)
        write_png_index(tmp / "seg0.png", _seg_to_ids(record.seg0))
        (tmp / "meta.json").write_text(json.dumps(record.metadata, indent=2, sort_keys=True))
        if clip_dir.exists():
            raise FileExistsError(f"clip directory {clip_dir} already exists")
        os.rename(tmp, clip_dir)
    finally:
        if tmp.exists():
            import shutil

            shutil.rmtree(tmp, ignore_errors=True)


def _seg_to_ids(seg: SegmentationFeatures) -> np.ndarray:
    # channels: instances 0..S-1 then background; stored ids: 0=background, 1..S=instances
    ids = seg.instance_ids
    n_inst = seg.data.shape[0] - 1
    out = np.where(ids == n_inst, 0, ids + 1)
    return out.astype(np.uint8)


def _ids_to_seg(ids: np.ndarray) -> SegmentationFeatures:
    n_inst = int(ids.max())
    onehot = np.zeros((n_inst + 1, *ids.shape), dtype=np.float32)
    for k in range(1, n_inst + 1):
        onehot[k - 1][ids == k] = 1.0
    onehot[-1][ids == 0] = 1.0
    return SegmentationFeatures(onehot, provenance="synthetic_ground_truth")


def load_clip(clip_dir) -> ClipRecord:
    clip_dir = Path(clip_dir)
    meta_path = clip_dir / "meta.json"
    if not meta_path.exists():
        raise FileUnreadableError(f"{clip_dir} has no meta.json")
    metadata = json.loads(meta_path.read_text())
    frame_files = sorted(clip_dir.glob("frame_*.png"))
    if not frame_files:
        raise FileUnreadableError(f"{clip_dir} has no frames")
    video = np.stack([read_png_rgb(f) for f in frame_files])
    flow = read_flow_sequence(clip_dir)
    depth0 = read_png_gray16(clip_dir / "depth0.png")
    seg_ids = read_png_index(clip_dir / "seg0.png")
    flow_valid = consistency = None
    if metadata.get("source") == "synthetic" and "scene" in metadata:
        rerendered = render_scene(scene_from_json(metadata["scene"]))
        flow_valid = rerendered.flow_valid
        consistency = rerendered.consistency_mask
    return ClipRecord(
        video=VideoTensor(video),
        flow_gt=FlowField(flow),
        depth0=DepthMap(frame=Frame(depth0[None], color_space="depth"), provenance="synthetic_ground_truth"),
        seg0=_ids_to_seg(seg_ids),
        metadata=metadata,
        flow_valid=flow_valid,
        consistency_mask=consistency,
    )


def ingest_geometry(src_h: int, src_w: int, target: int = 256):
    """Resize/pad arithmetic: scale the long side to `target`, pad the rest.

    Returns (new_h, new_w, pad_top, pad_bottom, pad_left, pad_right).
    Odd pad totals put the extra row at the bottom (column at the right).
    """
    if src_w >= src_h:
        new_w = target
        new_h = int(round(src_h * target / src_w))
    else:
        new_h = target
        new_w = int(round(src_w * target / src_h))
    pad_v = target - new_h
    pad_h = target - new_w
    return (
        new_h,
        new_w,
        pad_v // 2,
        pad_v - pad_v // 2,
        pad_h // 2,
        pad_h - pad_h // 2,
    )


class BlockMatchFlowEstimator:
    """Integer-displacement block matcher: coarse but honest and dependency-free."""

    id = "block-match-ssd"

    def __init__(self, max_disp: int = 8, patch: int = 7, stride: int = 4):
        self.max_disp = max_disp
        self.patch = patch
        self.stride = stride

    def __call__(self, frame_a: np.ndarray, frame_b: np.ndarray) -> np.ndarray:
        gray_a = frame_a.mean(axis=0)
        gray_b = frame_b.mean(axis=0)
        h, w = gray_a.shape
        half = self.patch // 2
        flow = np.zeros((2, h, w), dtype=np.float32)
        for cy in range(half, h - half, self.stride):
            for cx in range(half, w - half, self.stride):
                ref = gray_a[cy - half : cy + half + 1, cx - half : cx + half + 1]
                best, best_d = np.inf, (0, 0)
                for dy in range(-self.max_disp, self.max_disp + 1):
                    ty = cy + dy
                    if ty - half < 0 or ty + half >= h:
                        continue
                    for dx in range(-self.max_disp, self.max_disp + 1):
                        tx = cx + dx
                        if tx - half < 0 or tx + half >= w:
                            continue
                        cand = gray_b[ty - half : ty + half + 1, tx - half : tx + half + 1]
                        ssd = float(((ref - cand) ** 2).sum())
                        if ssd < best - 1e-12:
                            best, best_d = ssd, (dx, dy)
                y_lo, y_hi = cy - self.stride // 2, cy + self.stride // 2 + 1
                x_lo, x_hi = cx - self.stride // 2, cx + self.stride // 2 + 1
                flow[0, max(0, y_lo) : y_hi, max(0, x_lo) : x_hi] = best_d[0]
                flow[1, max(0, y_lo) : y_hi, max(0, x_lo) : x_hi] = best_d[1]
        return flow


class ZeroFlowEstimator:
    id = "zero"

    def __call__(self, frame_a: np.ndarray, frame_b: np.ndarray) -> np.ndarray:
        return np.zeros((2, *frame_a.shape[1:]), dtype=np.float32)


def ingest_clip(video_path, num_frames: int, providers, target: int = 256,
                start_frame: int = 0, flow_estimator=None,
                crop: tuple[int, int, int, int] | None = None) -> ClipRecord:
    """Extract frames from a video file and normalize them to a square raster.

    crop: optional (x, y, w, h) source-rectangle applied before resizing.
    providers: object with segment()/estimate_depth() for the first frame.
    """
    import cv2

    cap = cv2.VideoCapture(str(video_path))
    if not cap.isOpened():
        raise FileUnreadableError(f"cannot open video {video_path}")
    try:
        raw = []
        idx = 0
        while len(raw) < num_frames:
            ok, bgr = cap.read()
            if not ok:
                break
            if idx >= start_frame:
                raw.append(bgr[:, :, ::-1].copy())
            idx += 1
    finally:
        cap.release()
    if len(raw) < num_frames:
        raise TooFewFramesError(
            f"requested {num_frames} frames from offset {start_frame}, video yielded {len(raw)}"
        )

    estimator = flow_estimator or ZeroFlowEstimator()
    frames = []
    for img in raw:
        if crop is not None:
            x, y, w, h = crop
            img = img[y : y + h, x : x + w]
        chw = img.astype(np.float32).transpose(2, 0, 1) / 255.0
        new_h, new_w, pt, pb, pl, pr = ingest_geometry(chw.shape[1], chw.shape[2], target)
        resized = bilinear_resize(chw, new_h, new_w)
        padded = np.pad(resized, ((0, 0), (pt, pb), (pl, pr)))
        frames.append(padded)
    video = np.stack(frames)

    flow = np.stack([estimator(video[0], video[t + 1]) for t in range(num_frames - 1)])
    frame0 = Frame(video[0], color_space="rgb")
    seg0 = providers.segment(frame0)
    depth0 = providers.estimate_depth(frame0)
    src_h, src_w = raw[0].shape[0], raw[0].shape[1]
    metadata = {
        "source": str(video_path),
        "start_frame": start_frame,
        "crop": list(crop) if crop else None,
        "src_size": [src_h, src_w],
        "resize_policy": RESIZE_POLICY_ID,
        "flow_estimator": getattr(estimator, "id", type(estimator).__name__),
        "num_frames": num_frames,
        "target": target,
    }
    return ClipRecord(
        video=VideoTensor(np.clip(video, 0.0, 1.0)),
        flow_gt=FlowField(flow),
        depth0=depth0,
        seg0=seg0,
        metadata=metadata,
    )


def mean_speed_of_distribution(dist: SceneDistribution) -> float:
    """Closed-form mean speed of the integer velocity grid the sampler draws from."""
    limit = dist.speed_limit
    speeds = [
        math.hypot(vx, vy)
        for vx in range(-limit, limit + 1)
        for vy in range(-limit, limit + 1)
    ]
    return float(np.mean(speeds))


def clicks_from_ground_truth(record: ClipRecord, n_clicks: int, rng: np.random.Generator):
    """Click tracks riding the ground-truth flow of the first visible instance."""
    from trajvid.trajectory import TrajectorySet

    ys, xs = np.nonzero(np.asarray(record.seg0.data[0]))
    if ys.size == 0:
        raise ValueError("record has no foreground instance to click on")
    h, w = record.depth0.data.shape
    idx = rng.choice(ys.size, size=min(n_clicks, ys.size), replace=False)
    tracks = []
    t_total = record.video.num_frames
    for k in idx:
        y, x = float(ys[k]), float(xs[k])
        pts = [(x, y)]
        for t in range(t_total - 1):
            dx = float(record.flow_gt.data[t, 0, int(y), int(x)])
            dy = float(record.flow_gt.data[t, 1, int(y), int(x)])
            pts.append((min(max(x + dx, 0.0), w - 1.0), min(max(y + dy, 0.0), h - 1.0)))
        tracks.append(tuple(pts))
    return TrajectorySet(tracks=tuple(tracks), num_frames=t_total, width=w, height=h)


def completion_pairs_from_records(records, rng: np.random.Generator, max_clicks: int = 4,
                                  stationary_frames: int = 2):
    """Training tuples (image, sparse, mask, scattered, dense) for the refiner.

    Each record also contributes stationary-click pairs (hints present with
    zero displacement, zero target flow) so the refiner learns that zero
    commanded motion means zero dense motion, whatever the image shows.
    """
    from trajvid.trajectory import TrajectorySet, densify_flow, tracks_to_sparse_flow

    pairs = []
    for record in records:
        image = np.asarray(record.video.data[0], dtype=np.float32)
        h, w = record.depth0.data.shape
        traj = clicks_from_ground_truth(record, int(rng.integers(1, max_clicks + 1)), rng)
        sparse = tracks_to_sparse_flow(traj)
        scattered = densify_flow(sparse)
        for t in range(record.flow_gt.data.shape[0]):
            pairs.append(
                (
                    image,
                    sparse.flow.data[t].astype(np.float32),
                    sparse.mask[t].astype(np.float32),
                    scattered.data[t].astype(np.float32),
                    record.flow_gt.data[t].astype(np.float32),
                )
            )
        if stationary_frames:
            anchors = tuple(
                ((float(tr[0][0]), float(tr[0][1])),) for tr in traj.tracks
            )
            static = TrajectorySet(
                tracks=anchors, num_frames=record.video.num_frames, width=w, height=h
            )
            s_sparse = tracks_to_sparse_flow(static)
            s_scattered = densify_flow(s_sparse)
            zero_target = np.zeros((2, h, w), np.float32)
            for t in range(min(stationary_frames, record.flow_gt.data.shape[0])):
                pairs.append(
                    (
                        image,
                        s_sparse.flow.data[t].astype(np.float32),
                        s_sparse.mask[t].astype(np.float32),
                        s_scattered.data[t].astype(np.float32),
                        zero_target,
                    )
                )
    return pairs
