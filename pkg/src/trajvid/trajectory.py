"""Click trajectories to dense conditioning flow.

Pipeline: user click paths -> arc-length resampling -> first-frame-anchored
sparse flow -> dense flow, either by a closed-form truncated-Gaussian
scatter (default) or by a small learned completion network that refines the
scattered field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from trajvid import kernels
from trajvid.core import FlowField
from trajvid.errors import InvariantViolation, ModelShapeMismatchError
from trajvid.nn import Conv2d, Module, Tensor
from trajvid.nn import functional as F
from trajvid.nn.autograd import no_grad

DENSIFY_SIGMA_AT_256 = 8.0
DENSIFY_SUPPORT_AT_256 = 24.0
WEIGHT_FLOOR = 1e-8


@dataclass(frozen=True)
class TrajectorySet:
    """User click paths over one input frame.

    tracks: tuple of polylines, each a tuple of (x, y) pixel coordinates.
    num_frames: T, the length of the video the tracks control.
    width/height: the input frame extent the coordinates live in.
    """

    tracks: tuple
    num_frames: int
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(
            self,
            "tracks",
            tuple(tuple((float(x), float(y)) for x, y in tr) for tr in self.tracks),
        )
        report = self.violations()
        if report:
            raise InvariantViolation(report)

    def violations(self) -> list[str]:
        report = []
        if self.num_frames < 2:
            report.append(f"num_frames must be >= 2, got {self.num_frames}")
        if not self.tracks:
            report.append("at least one track required")
        for ti, track in enumerate(self.tracks):
            if len(track) < 1:
                report.append(f"track {ti} is empty")
                continue
            for pi, (x, y) in enumerate(track):
                if not (0 <= x <= self.width - 1) or not (0 <= y <= self.height - 1):
                    report.append(
                        f"track {ti} point {pi} ({x:g},{y:g}) outside "
                        f"[0,{self.width - 1}]x[0,{self.height - 1}]"
                    )
        return report


@dataclass(frozen=True)
class SparseFlow:
    """Anchored sparse control flow plus the mask of pixels that carry it."""

    flow: FlowField
    mask: np.ndarray  # (T-1,1,H,W) in {0,1}

    def __post_init__(self):
        m = np.asarray(self.mask)
        object.__setattr__(self, "mask", m)
        if m.shape != (self.flow.data.shape[0], 1, self.flow.height, self.flow.width):
            raise InvariantViolation([f"mask shape {m.shape} does not match flow {self.flow.data.shape}"])
        off = m[:, 0] == 0
        if np.any(self.flow.data[:, 0][off] != 0) or np.any(self.flow.data[:, 1][off] != 0):
            raise InvariantViolation(["sparse flow carries values outside its mask"])


def resample_track(track, num_frames: int):
    """Resample a polyline to exactly num_frames arc-length-uniform points.

    The first sample is the first click and the last sample the last click.
    Single-point or zero-length tracks repeat the first point.
    """
    pts = [(float(x), float(y)) for x, y in track]
    if not pts:
        raise ValueError("track must contain at least one point")
    if len(pts) == 1 or num_frames == 1:
        return [pts[0]] * num_frames
    seg = [math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:])]
    total = sum(seg)
    if total == 0.0:
        return [pts[0]] * num_frames
    cum = [0.0]
    for s in seg:
        cum.append(cum[-1] + s)
    out = []
    for k in range(num_frames):
        if k == 0:
            out.append(pts[0])
            continue
        if k == num_frames - 1:
            out.append(pts[-1])
            continue
        target = total * k / (num_frames - 1)
        i = 0
        while i < len(seg) - 1 and cum[i + 1] < target:
            i += 1
        span = seg[i]
        f = 0.0 if span == 0 else (target - cum[i]) / span
        a, b = pts[i], pts[i + 1]
        out.append((a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])))
    return out


def tracks_to_sparse_flow(traj: TrajectorySet) -> SparseFlow:
    """Decode tracks into first-frame-anchored sparse flow.

    Frame t carries the cumulative displacement p_{t+1} - p_0 at the pixel
    nearest the track origin p_0; colliding tracks average their values.
    """
    t_minus_1 = traj.num_frames - 1
    h, w = traj.height, traj.width
    acc = np.zeros((t_minus_1, 2, h, w), dtype=np.float64)
    count = np.zeros((t_minus_1, 1, h, w), dtype=np.float64)
    for track in traj.tracks:
        pts = resample_track(track, traj.num_frames)
        x0, y0 = pts[0]
        px = int(np.clip(np.rint(x0), 0, w - 1))
        py = int(np.clip(np.rint(y0), 0, h - 1))
        for t in range(t_minus_1):
            dx = pts[t + 1][0] - x0
            dy = pts[t + 1][1] - y0
            acc[t, 0, py, px] += dx
            acc[t, 1, py, px] += dy
            count[t, 0, py, px] += 1.0
    flow = np.zeros_like(acc)
    nz = count[:, 0] > 0
    flow[:, 0][nz] = acc[:, 0][nz] / count[:, 0][nz]
    flow[:, 1][nz] = acc[:, 1][nz] / count[:, 0][nz]
    mask = (count > 0).astype(np.float32)
    return SparseFlow(flow=FlowField(flow.astype(np.float32)), mask=mask)


def default_densify_params(height: int, width: int) -> tuple[float, float]:
    """Scatter kernel defaults, scaled from their 256x256 reference values."""
    scale = min(height, width) / 256.0
    return DENSIFY_SIGMA_AT_256 * scale, DENSIFY_SUPPORT_AT_256 * scale


def densify_flow(sparse: SparseFlow, sigma: float | None = None,
                 support_radius: float | None = None) -> FlowField:
    """Spread sparse control vectors over the frame with a truncated Gaussian.

    Each pixel within support_radius of at least one source receives the
    weight-normalized average of nearby source values; everything else is 0.
    """
    h, w = sparse.flow.height, sparse.flow.width
    if sigma is None or support_radius is None:
        d_sigma, d_support = default_densify_params(h, w)
        sigma = d_sigma if sigma is None else sigma
        support_radius = d_support if support_radius is None else support_radius
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if support_radius < sigma:
        raise ValueError(f"support_radius {support_radius} must be >= sigma {sigma}")
    t_minus_1 = sparse.flow.data.shape[0]
    out = np.zeros((t_minus_1, 2, h, w), dtype=np.float32)
    for t in range(t_minus_1):
        src = np.nonzero(sparse.mask[t, 0])
        if src[0].size == 0:
            continue
        sy = src[0].astype(np.float64)
        sx = src[1].astype(np.float64)
        vals = np.stack(
            [sparse.flow.data[t, 0][src], sparse.flow.data[t, 1][src]], axis=1
        ).astype(np.float64)
        acc, wsum = kernels.densify_forward(sx, sy, vals, h, w, float(sigma), float(support_radius))
        keep = wsum >= WEIGHT_FLOOR
        frame = np.zeros((2, h, w), dtype=np.float64)
        frame[0][keep] = acc[0][keep] / wsum[keep]
        frame[1][keep] = acc[1][keep] / wsum[keep]
        out[t] = frame.astype(np.float32)
    return FlowField(out)


class FlowCompletionNet(Module):
    """Refines the scattered dense flow with a small per-frame CNN.

    Inputs per frame: the control image (object boundaries), sparse dx/dy,
    the source mask, and the scattered dx/dy.  A stride-2 bottleneck widens
    the receptive field enough to spread a few click hints over object-sized
    regions.  The head is zero-initialized, so an untrained network
    reproduces the scattered field exactly and learning only adds
    corrections.
    """

    IN_CHANNELS = 8  # image rgb + sparse dx,dy + mask + scattered dx,dy

    def __init__(self, hidden: int = 24, *, rng, dtype=np.float32):
        super().__init__()
        self.conv_in = Conv2d(self.IN_CHANNELS, hidden, 3, padding=1, rng=rng, dtype=dtype)
        self.down = Conv2d(hidden, 2 * hidden, 3, stride=2, padding=1, rng=rng, dtype=dtype)
        self.mid = Conv2d(2 * hidden, 2 * hidden, 3, padding=1, rng=rng, dtype=dtype)
        self.up = Conv2d(2 * hidden, hidden, 3, padding=1, rng=rng, dtype=dtype)
        self.conv_out = Conv2d(2 * hidden, 2, 3, padding=1, rng=rng, dtype=dtype, zero_init=True)

    def __call__(self, x: Tensor) -> Tensor:
        h0 = F.silu(self.conv_in(x))
        h = F.silu(self.down(h0))
        h = F.silu(self.mid(h))
        h = F.upsample_nearest2d(h, 2)
        if h.shape[2:] != h0.shape[2:]:
            h = F.narrow(F.narrow(h, 2, 0, h0.shape[2]), 3, 0, h0.shape[3])
        h = F.silu(self.up(h))
        return self.conv_out(F.concat([h, h0], axis=1))

    GATE_FULL_AT = 0.25  # commanded displacement (px) where the correction fully engages

    def refine(self, image: np.ndarray, sparse_frame: np.ndarray, mask_frame: np.ndarray,
               scattered_frame: np.ndarray) -> np.ndarray:
        # zero commanded motion returns the scattered field exactly: the
        # learned correction is gated by the largest hint displacement
        gate = min(float(np.abs(sparse_frame).max()) / self.GATE_FULL_AT, 1.0)
        if gate == 0.0:
            return scattered_frame.copy()
        x = self.stack_inputs(image, sparse_frame, mask_frame, scattered_frame)
        with no_grad():
            delta = self(Tensor(x[None]))
        return scattered_frame + gate * delta.data[0]

    @staticmethod
    def stack_inputs(image, sparse_frame, mask_frame, scattered_frame) -> np.ndarray:
        if image.shape[0] != 3:
            raise ModelShapeMismatchError(f"image must be (3,H,W), got {image.shape}")
        if sparse_frame.shape[0] != 2 or scattered_frame.shape[0] != 2:
            raise ModelShapeMismatchError(
                f"flow frames must be (2,H,W), got {sparse_frame.shape} and {scattered_frame.shape}"
            )
        if (
            sparse_frame.shape[1:] != mask_frame.shape[1:]
            or sparse_frame.shape[1:] != scattered_frame.shape[1:]
            or sparse_frame.shape[1:] != image.shape[1:]
        ):
            raise ModelShapeMismatchError("image, sparse, mask and scattered frames disagree on size")
        return np.concatenate(
            [image, sparse_frame, mask_frame, scattered_frame], axis=0
        ).astype(np.float32)


def complete_flow(sparse: SparseFlow, model: FlowCompletionNet | None = None,
                  image: np.ndarray | None = None, sigma: float | None = None,
                  support_radius: float | None = None) -> FlowField:
    """Dense flow from sparse control; learned refinement when a model is set.

    The learned path also needs the control image, since the refiner reads
    object boundaries from it.
    """
    scattered = densify_flow(sparse, sigma=sigma, support_radius=support_radius)
    if model is None:
        return scattered
    if image is None:
        raise ModelShapeMismatchError("the learned completion path requires the control image")
    frames = []
    for t in range(scattered.data.shape[0]):
        frames.append(
            model.refine(
                np.asarray(image, dtype=np.float32),
                sparse.flow.data[t].astype(np.float32),
                sparse.mask[t].astype(np.float32),
                scattered.data[t].astype(np.float32),
            )
        )
    return FlowField(np.stack(frames))


def train_completion_network(model: FlowCompletionNet, pairs, steps: int, lr: float = 1e-3,
                             seed: int = 0, batch: int = 8) -> list[float]:
    """Fit the refinement net on (image, sparse, mask, scattered, dense) frames.

    pairs: list of tuples of (3,H,W), (2,H,W), (1,H,W), (2,H,W), (2,H,W).
    Returns the per-step loss trace.
    """
    from trajvid.nn import AdamW

    rng = np.random.default_rng(seed)
    opt = AdamW(model.parameters(), lr=lr, weight_decay=0.0)
    losses = []
    for _ in range(steps):
        idx = rng.integers(0, len(pairs), size=min(batch, len(pairs)))
        xs, targets, bases = [], [], []
        for i in idx:
            img, sp, mk, sc, dense = pairs[i]
            xs.append(model.stack_inputs(img, sp, mk, sc))
            bases.append(sc)
            targets.append(dense)
        x = Tensor(np.stack(xs))
        delta = model(x)
        target = np.stack(targets) - np.stack(bases)
        loss = F.mse_loss(delta, Tensor(target.astype(np.float32)))
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    return losses


def trajectory_to_json(traj: TrajectorySet) -> dict:
    """The wire schema shared with the studio client."""
    return {
        "frames": traj.num_frames,
        "tracks": [[{"x": x, "y": y} for x, y in tr] for tr in traj.tracks],
    }


def trajectory_from_json(payload: dict, width: int, height: int) -> TrajectorySet:
    """Parse and validate the wire schema; raises ValueError naming the bad field."""
    if not isinstance(payload, dict):
        raise ValueError("trajectory payload must be an object")
    if "frames" not in payload:
        raise ValueError("missing field 'frames'")
    frames = payload["frames"]
    if not isinstance(frames, int) or frames < 2:
        raise ValueError(f"'frames' must be an integer >= 2, got {frames!r}")
    raw_tracks = payload.get("tracks")
    if not isinstance(raw_tracks, list) or not raw_tracks:
        raise ValueError("'tracks' must be a non-empty list")
    tracks = []
    for ti, tr in enumerate(raw_tracks):
        if not isinstance(tr, list) or not tr:
            raise ValueError(f"tracks[{ti}] must be a non-empty list of points")
        pts = []
        for pi, pt in enumerate(tr):
            if not isinstance(pt, dict) or "x" not in pt or "y" not in pt:
                raise ValueError(f"tracks[{ti}][{pi}] must be an object with 'x' and 'y'")
            x, y = pt["x"], pt["y"]
            if not isinstance(x, (int, float)) or not isinstance(y, (int, float)):
                raise ValueError(f"tracks[{ti}][{pi}] coordinates must be numbers")
            if not (0 <= x <= width - 1) or not (0 <= y <= height - 1):
                raise ValueError(
                    f"tracks[{ti}][{pi}] ({x:g},{y:g}) outside image bounds "
                    f"[0,{width - 1}]x[0,{height - 1}]"
                )
            pts.append((float(x), float(y)))
        tracks.append(tuple(pts))
    return TrajectorySet(tracks=tuple(tracks), num_frames=frames, width=width, height=height)
