"""Evaluation battery: PSNR, SSIM, frame consistency, flow error, Fréchet, IS.

Weight-bearing pretrained embedders are out of scope; everything that needs
an embedding or a classifier takes a pluggable callable, with deterministic
weight-free defaults (a 16x16 downsample embedder, a luminance-histogram
classifier) so reports are reproducible anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from trajvid.core import FlowField, VideoTensor
from trajvid.errors import DistributionError, ShapeMismatchError
from trajvid.imageops import bilinear_resize

PSNR_CAP_DB = 100.0


@dataclass(frozen=True)
class EmbedderSpec:
    id: str
    dimension: int
    deterministic: bool
    description: str = ""


class Pix16Embedder:
    """Bilinear 16x16 downsample, flatten, L2-normalize.  Weight-free."""

    spec = EmbedderSpec(
        id="pix16",
        dimension=16 * 16 * 3,
        deterministic=True,
        description="bilinear 16x16 downsample + flatten + L2 normalization",
    )

    def __call__(self, frame: np.ndarray) -> np.ndarray:
        small = bilinear_resize(np.asarray(frame, dtype=np.float64), 16, 16)
        vec = small.ravel()
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


class LuminanceHistogramClassifier:
    """Toy frame 'classifier': a normalized luminance histogram as class scores."""

    id = "luma-hist-8"

    def __init__(self, bins: int = 8):
        self.bins = bins

    def __call__(self, frame: np.ndarray) -> np.ndarray:
        luma = 0.299 * frame[0] + 0.587 * frame[1] + 0.114 * frame[2]
        hist, _ = np.histogram(luma, bins=self.bins, range=(0.0, 1.0))
        total = hist.sum()
        if total == 0:
            return np.full(self.bins, 1.0 / self.bins)
        return hist.astype(np.float64) / total


def _video_array(v) -> np.ndarray:
    if isinstance(v, VideoTensor):
        return np.asarray(v.data, dtype=np.float64)
    return np.asarray(v, dtype=np.float64)


def psnr(a, b, peak: float = 1.0):
    """Per-frame 10*log10(peak^2 / MSE), capped at 100 dB; returns (per_frame, mean)."""
    a, b = _video_array(a), _video_array(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"psnr inputs disagree: {a.shape} vs {b.shape}")
    per_frame = []
    for t in range(a.shape[0]):
        mse = float(((a[t] - b[t]) ** 2).mean())
        if mse == 0.0:
            per_frame.append(PSNR_CAP_DB)
        else:
            per_frame.append(min(10.0 * math.log10(peak * peak / mse), PSNR_CAP_DB))
    return per_frame, float(np.mean(per_frame))


def _gaussian_kernel_1d(window: int, sigma: float) -> np.ndarray:
    half = window // 2
    xs = np.arange(window) - half
    g = np.exp(-(xs ** 2) / (2 * sigma * sigma))
    return g / g.sum()


def _windowed_mean(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable valid-mode correlation with the normalized Gaussian
    rows = sliding_window_view(x, g.size, axis=1) @ g
    return sliding_window_view(rows, g.size, axis=0) @ g


def ssim(a, b, window: int = 11, k1: float = 0.01, k2: float = 0.03,
         sigma: float = 1.5, peak: float = 1.0):
    """Gaussian-window SSIM over fully-inside windows, averaged over channels.

    Returns (per_frame, mean) for (T,C,H,W) inputs.
    """
    a, b = _video_array(a), _video_array(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"ssim inputs disagree: {a.shape} vs {b.shape}")
    if a.shape[2] < window or a.shape[3] < window:
        raise ShapeMismatchError(
            f"frames {a.shape[2]}x{a.shape[3]} smaller than the {window}-pixel window"
        )
    g = _gaussian_kernel_1d(window, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    per_frame = []
    for t in range(a.shape[0]):
        channel_vals = []
        for ch in range(a.shape[1]):
            xa, xb = a[t, ch], b[t, ch]
            mu_a = _windowed_mean(xa, g)
            mu_b = _windowed_mean(xb, g)
            e_aa = _windowed_mean(xa * xa, g)
            e_bb = _windowed_mean(xb * xb, g)
            e_ab = _windowed_mean(xa * xb, g)
            var_a = e_aa - mu_a ** 2
            var_b = e_bb - mu_b ** 2
            cov = e_ab - mu_a * mu_b
            smap = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
                (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
            )
            channel_vals.append(smap.mean())
        per_frame.append(float(np.mean(channel_vals)))
    return per_frame, float(np.mean(per_frame))


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 and nv == 0:
        return 1.0
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def frame_consistency(video, embedder=None):
    """Mean cosine similarity of consecutive frame embeddings, as a percentage."""
    arr = _video_array(video)
    if arr.shape[0] < 2:
        raise ShapeMismatchError("frame consistency needs at least two frames")
    embedder = embedder or Pix16Embedder()
    embs = [embedder(arr[t]) for t in range(arr.shape[0])]
    pairs = [_cosine(embs[t], embs[t + 1]) for t in range(len(embs) - 1)]
    return [p * 100.0 for p in pairs], float(np.mean(pairs) * 100.0)


def flow_error(pred: FlowField | np.ndarray, gt: FlowField | np.ndarray,
               valid_mask: np.ndarray | None = None):
    """(mean endpoint error, outlier fraction).

    Outliers follow the two-condition rule: EPE > 3 px and EPE > 5% of the
    ground-truth magnitude, evaluated over valid pixels.
    """
    p = np.asarray(pred.data if isinstance(pred, FlowField) else pred, dtype=np.float64)
    g = np.asarray(gt.data if isinstance(gt, FlowField) else gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeMismatchError(f"flow shapes disagree: {p.shape} vs {g.shape}")
    epe_map = np.sqrt(((p - g) ** 2).sum(axis=-3))  # (..., H, W)
    mag_map = np.sqrt((g ** 2).sum(axis=-3))
    if valid_mask is not None:
        valid = np.asarray(valid_mask, dtype=bool).reshape(epe_map.shape)
    else:
        valid = np.ones_like(epe_map, dtype=bool)
    if not valid.any():
        return 0.0, 0.0
    epe_v = epe_map[valid]
    mag_v = mag_map[valid]
    outliers = (epe_v > 3.0) & (epe_v > 0.05 * mag_v)
    return float(epe_v.mean()), float(outliers.mean())


def gaussian_stats(embeddings: np.ndarray):
    """(mean, covariance) of row-stacked embeddings."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    mu = embeddings.mean(axis=0)
    sigma = np.cov(embeddings, rowvar=False)
    if sigma.ndim == 0:
        sigma = sigma.reshape(1, 1)
    return mu, sigma


def _psd_sqrt(mat: np.ndarray, clamp: float = 1e-10) -> np.ndarray:
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, clamp)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(stats_a, stats_b, clamp: float = 1e-10) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    The cross-term square root is computed as sqrt(A^{1/2} B A^{1/2}) via
    eigendecomposition with eigenvalues clamped at `clamp`; that clamping is
    the documented regularization.
    """
    mu_a, sigma_a = stats_a
    mu_b, sigma_b = stats_b
    mu_a, mu_b = np.asarray(mu_a, dtype=np.float64), np.asarray(mu_b, dtype=np.float64)
    if mu_a.shape != mu_b.shape:
        raise ShapeMismatchError(f"mean dimensions disagree: {mu_a.shape} vs {mu_b.shape}")
    sigma_a = np.asarray(sigma_a, dtype=np.float64)
    sigma_b = np.asarray(sigma_b, dtype=np.float64)
    if sigma_a.shape != sigma_b.shape or sigma_a.shape != (mu_a.size, mu_a.size):
        raise ShapeMismatchError("covariance shapes disagree with the mean dimension")
    for name, arr in (("means", (mu_a, mu_b)), ("covariances", (sigma_a, sigma_b))):
        for x in arr:
            if not np.isfinite(x).all():
                raise ShapeMismatchError(f"non-finite values in {name}")
    root_a = _psd_sqrt(sigma_a, clamp)
    cross = _psd_sqrt(root_a @ ((sigma_b + sigma_b.T) / 2.0) @ root_a, clamp)
    diff = mu_a - mu_b
    val = float(diff @ diff + np.trace(sigma_a) + np.trace(sigma_b) - 2.0 * np.trace(cross))
    return max(val, 0.0)


def inception_score(probabilities: np.ndarray) -> float:
    """exp(mean_n KL(p_n || marginal)) over N x K class-probability rows."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 2:
        raise DistributionError(f"probabilities must be (N,K), got shape {p.shape}")
    if np.any(p < -1e-12):
        raise DistributionError("probability rows contain negative entries")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise DistributionError("probability rows must sum to 1 within 1e-6")
    marginal = p.mean(axis=0)
    eps = 1e-16
    kl = (p * (np.log(p + eps) - np.log(marginal + eps))).sum(axis=1)
    return float(np.exp(kl.mean()))


@dataclass
class MetricReport:
    """Aggregates plus the per-item breakdowns they were computed from."""

    values: dict = field(default_factory=dict)
    breakdowns: dict = field(default_factory=dict)
    embedder_ids: dict = field(default_factory=dict)
    sample_counts: dict = field(default_factory=dict)
    schema_version: int = 1

    def add(self, name: str, aggregate: float, breakdown=None, embedder: str | None = None,
            samples: int | None = None):
        self.values[name] = float(aggregate)
        if breakdown is not None:
            self.breakdowns[name] = [float(x) for x in breakdown]
        if embedder is not None:
            self.embedder_ids[name] = embedder
        if samples is not None:
            self.sample_counts[name] = int(samples)

    def verify(self) -> list[str]:
        """Aggregates must equal recomputation from their stored breakdowns."""
        problems = []
        for name, breakdown in self.breakdowns.items():
            if not breakdown:
                continue
            recomputed = float(np.mean(breakdown))
            if abs(recomputed - self.values[name]) > 1e-9 * max(1.0, abs(recomputed)):
                problems.append(f"{name}: stored {self.values[name]} != recomputed {recomputed}")
        return problems

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "values": self.values,
            "breakdowns": self.breakdowns,
            "embedder_ids": self.embedder_ids,
            "sample_counts": self.sample_counts,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "MetricReport":
        return cls(
            values=dict(payload["values"]),
            breakdowns={k: list(v) for k, v in payload.get("breakdowns", {}).items()},
            embedder_ids=dict(payload.get("embedder_ids", {})),
            sample_counts=dict(payload.get("sample_counts", {})),
            schema_version=payload.get("schema_version", 1),
        )


def evaluate_pair(generated: VideoTensor, reference: VideoTensor,
                  pred_flow: FlowField | None = None, gt_flow: FlowField | None = None,
                  flow_valid: np.ndarray | None = None,
                  embedder=None) -> MetricReport:
    """Standard per-clip report between one generated and one reference video."""
    embedder = embedder or Pix16Embedder()
    report = MetricReport()
    frames_psnr, mean_psnr = psnr(generated, reference, peak=1.0)
    report.add("psnr_db", mean_psnr, frames_psnr, samples=len(frames_psnr))
    frames_ssim, mean_ssim = ssim(generated, reference)
    report.add("ssim", mean_ssim, frames_ssim, samples=len(frames_ssim))
    pairs_fc, mean_fc = frame_consistency(generated, embedder)
    report.add("frame_consistency_pct", mean_fc, pairs_fc,
               embedder=getattr(embedder, "spec", EmbedderSpec("custom", 0, False)).id,
               samples=len(pairs_fc))
    if pred_flow is not None and gt_flow is not None:
        epe, outliers = flow_error(pred_flow, gt_flow, flow_valid)
        report.add("flow_epe_px", epe, samples=int(np.prod(np.asarray(gt_flow.data).shape[:1])))
        report.add("flow_outlier_fraction", outliers)
    return report
