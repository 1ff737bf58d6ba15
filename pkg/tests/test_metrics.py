import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajvid.core import FlowField, VideoTensor
from trajvid.errors import DistributionError, ShapeMismatchError
from trajvid.metrics import (
    LuminanceHistogramClassifier,
    MetricReport,
    evaluate_pair,
    flow_error,
    frame_consistency,
    frechet_distance,
    gaussian_stats,
    inception_score,
    psnr,
    ssim,
)

from oracles import ssim_window_oracle


def test_psnr_identical_is_capped(rng):
    v = rng.uniform(0, 1, size=(3, 3, 16, 16))
    per_frame, mean = psnr(v, v)
    assert per_frame == [100.0] * 3
    assert mean == 100.0


def test_psnr_known_value_peak255():
    # MSE exactly 1 at peak 255: 20*log10(255) = 48.1308 dB
    a = np.zeros((1, 1, 10, 10))
    b = np.ones((1, 1, 10, 10))
    _, mean = psnr(a, b, peak=255.0)
    assert mean == pytest.approx(48.1308, abs=1e-3)


def test_psnr_symmetry(rng):
    a = rng.uniform(0, 1, size=(2, 3, 8, 8))
    b = rng.uniform(0, 1, size=(2, 3, 8, 8))
    assert psnr(a, b)[1] == psnr(b, a)[1]


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        psnr(np.zeros((1, 3, 8, 8)), np.zeros((1, 3, 8, 9)))


def test_ssim_identical_is_one(rng):
    v = rng.uniform(0, 1, size=(2, 3, 16, 16))
    per_frame, mean = ssim(v, v)
    assert mean == pytest.approx(1.0, abs=1e-12)


def test_ssim_inverted_structure_negative():
    rng = np.random.default_rng(3)
    a = (rng.uniform(0, 1, size=(1, 1, 24, 24)) > 0.5).astype(np.float64)
    b = 1.0 - a
    _, mean = ssim(a, b)
    assert mean < 0


def test_ssim_matches_window_oracle(rng):
    a = rng.uniform(0, 1, size=(32, 32))
    b = np.clip(a + rng.normal(scale=0.1, size=(32, 32)), 0, 1)
    _, got = ssim(a[None, None], b[None, None])
    want = ssim_window_oracle(a, b)
    assert got == pytest.approx(want, abs=1e-6)


def test_ssim_too_small_frame():
    with pytest.raises(ShapeMismatchError):
        ssim(np.zeros((1, 1, 8, 8)), np.zeros((1, 1, 8, 8)))


def test_ssim_symmetry(rng):
    a = rng.uniform(0, 1, size=(1, 3, 16, 16))
    b = rng.uniform(0, 1, size=(1, 3, 16, 16))
    assert ssim(a, b)[1] == pytest.approx(ssim(b, a)[1], abs=1e-12)


def test_frame_consistency_identical_frames(rng):
    frame = rng.uniform(0, 1, size=(3, 16, 16))
    video = np.stack([frame] * 4)
    _, pct = frame_consistency(video)
    assert pct == pytest.approx(100.0)


def test_frame_consistency_orthogonal_embeddings():
    class AlternatingEmbedder:
        def __init__(self):
            self.calls = 0

        def __call__(self, frame):
            self.calls += 1
            v = np.zeros(4)
            v[self.calls % 2] = 1.0
            return v

    video = np.zeros((4, 3, 16, 16))
    _, pct = frame_consistency(video, AlternatingEmbedder())
    assert pct == pytest.approx(0.0)


def test_frame_consistency_slow_beats_fast():
    from trajvid.data import ShapeSpec, SyntheticScene, render_scene

    def speed_scene(v):
        shape = ShapeSpec("ellipse", (16.0, 16.0), (6.0, 5.0), 0.8, (v, 0), texture_seed=4)
        return render_scene(
            SyntheticScene(seed=1, height=32, width=32, num_frames=6, shapes=(shape,))
        )

    _, slow = frame_consistency(speed_scene(1).video)
    _, fast = frame_consistency(speed_scene(4).video)
    assert slow > fast


def test_flow_error_exact_zero():
    f = FlowField(np.ones((2, 2, 8, 8)))
    epe, outliers = flow_error(f, f)
    assert epe == 0.0 and outliers == 0.0


def test_flow_error_three_four_five():
    gt = np.zeros((1, 2, 8, 8))
    pred = gt.copy()
    pred[:, 0] += 3.0
    pred[:, 1] += 4.0
    epe, _ = flow_error(pred, gt)
    assert epe == pytest.approx(5.0)


def test_flow_outlier_two_condition_rule():
    gt = np.zeros((1, 2, 8, 8))
    gt[:, 0] = 100.0
    pred = gt.copy()
    pred[:, 0] = 96.0  # EPE 4 > 3 but 4 < 5% of 100
    _, outliers = flow_error(pred, gt)
    assert outliers == 0.0
    pred[:, 0] = 90.0  # EPE 10 > 3 and 10 > 5
    _, outliers = flow_error(pred, gt)
    assert outliers == 1.0


def test_flow_error_asymmetry():
    # EPE 4 straddles the 5% rule: 5% of 80 is 4.0 (not an outlier) while
    # 5% of 76 is 3.8 (an outlier), so swapping the arguments changes the call
    gt = np.zeros((1, 2, 8, 8))
    gt[:, 0] = 80.0
    pred = gt.copy()
    pred[:, 0] = 76.0
    a = flow_error(pred, gt)
    b = flow_error(gt, pred)
    assert a[1] == 0.0 and b[1] == 1.0


def test_flow_error_valid_mask():
    gt = np.zeros((1, 2, 4, 4))
    pred = gt.copy()
    pred[0, 0, 0, 0] = 8.0
    mask = np.ones((1, 1, 4, 4))
    mask[0, 0, 0, 0] = 0
    epe, outliers = flow_error(pred, gt, mask)
    assert epe == 0.0 and outliers == 0.0


def test_frechet_identical_stats(rng):
    x = rng.normal(size=(200, 6))
    stats = gaussian_stats(x)
    assert frechet_distance(stats, stats) <= 1e-8


def test_frechet_1d_closed_form():
    stats_a = (np.array([0.0]), np.array([[1.0]]))
    stats_b = (np.array([2.0]), np.array([[1.0]]))
    assert frechet_distance(stats_a, stats_b) == pytest.approx(4.0, abs=1e-8)


def test_frechet_commuting_diagonal():
    stats_a = (np.zeros(2), np.diag([1.0, 4.0]))
    stats_b = (np.zeros(2), np.diag([4.0, 1.0]))
    # diagonal case: sum of (sigma_a - sigma_b)^2 = 1 + 1
    assert frechet_distance(stats_a, stats_b) == pytest.approx(2.0, abs=1e-8)


def test_frechet_nonnegative_random(rng):
    for _ in range(5):
        x = rng.normal(size=(50, 4))
        y = rng.normal(loc=0.3, size=(60, 4))
        d = frechet_distance(gaussian_stats(x), gaussian_stats(y))
        assert d >= 0.0


def test_frechet_dimension_mismatch():
    with pytest.raises(ShapeMismatchError):
        frechet_distance((np.zeros(2), np.eye(2)), (np.zeros(3), np.eye(3)))


def test_inception_score_identical_rows():
    p = np.full((10, 4), 0.25)
    assert inception_score(p) == pytest.approx(1.0)


def test_inception_score_one_hot_k():
    for k in (2, 4, 7):
        p = np.eye(k)
        assert inception_score(p) == pytest.approx(k, abs=1e-6)


def test_inception_score_rejects_bad_rows():
    with pytest.raises(DistributionError):
        inception_score(np.full((3, 4), 0.3))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(2, 12))
def test_inception_score_bounds(k, n):
    rng = np.random.default_rng(k * 100 + n)
    p = rng.dirichlet(np.ones(k), size=n)
    score = inception_score(p)
    assert 1.0 - 1e-9 <= score <= k + 1e-9


def test_luminance_classifier_rows_sum_to_one(rng):
    clf = LuminanceHistogramClassifier()
    frame = rng.uniform(0, 1, size=(3, 16, 16))
    probs = clf(frame)
    assert probs.sum() == pytest.approx(1.0)


def test_report_self_consistency(rng):
    gen = VideoTensor(rng.uniform(0, 1, size=(4, 3, 16, 16)).astype(np.float32))
    ref = VideoTensor(rng.uniform(0, 1, size=(4, 3, 16, 16)).astype(np.float32))
    report = evaluate_pair(gen, ref)
    assert report.verify() == []
    assert report.embedder_ids["frame_consistency_pct"] == "pix16"
    payload = report.to_json()
    back = MetricReport.from_json(payload)
    assert back.verify() == []
    assert back.values == report.values


def test_report_verify_catches_tampering(rng):
    gen = VideoTensor(rng.uniform(0, 1, size=(3, 3, 16, 16)).astype(np.float32))
    ref = VideoTensor(rng.uniform(0, 1, size=(3, 3, 16, 16)).astype(np.float32))
    report = evaluate_pair(gen, ref)
    report.values["psnr_db"] += 1.0
    assert report.verify() != []
