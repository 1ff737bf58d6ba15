import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajvid.core import FlowField
from trajvid.errors import InvariantViolation
from trajvid.trajectory import (
    FlowCompletionNet,
    SparseFlow,
    TrajectorySet,
    complete_flow,
    densify_flow,
    resample_track,
    tracks_to_sparse_flow,
    trajectory_from_json,
    trajectory_to_json,
)

from oracles import arc_length_resample_oracle, densify_oracle


def test_resample_straight_segment():
    pts = resample_track([(10, 10), (20, 10)], 11)
    assert len(pts) == 11
    for k, (x, y) in enumerate(pts):
        assert x == pytest.approx(10 + k)
        assert y == pytest.approx(10)


def test_resample_single_point_repeats():
    assert resample_track([(5, 5)], 8) == [(5.0, 5.0)] * 8


def test_resample_l_shaped_track():
    pts = resample_track([(0, 0), (10, 0), (10, 10)], 5)
    want = [(0, 0), (5, 0), (10, 0), (10, 5), (10, 10)]
    for got, exp in zip(pts, want):
        assert got == pytest.approx(exp)


def test_resample_matches_oracle(rng):
    for _ in range(20):
        n = int(rng.integers(2, 6))
        track = [(float(x), float(y)) for x, y in rng.uniform(0, 31, size=(n, 2))]
        T = int(rng.integers(2, 12))
        got = resample_track(track, T)
        want = arc_length_resample_oracle(track, T)
        np.testing.assert_allclose(got, want, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(
    pts=st.lists(
        st.tuples(st.floats(0, 31), st.floats(0, 31)), min_size=1, max_size=6
    ),
    T=st.integers(2, 16),
)
def test_resample_endpoint_preservation(pts, T):
    out = resample_track(pts, T)
    assert len(out) == T
    assert out[0] == (pts[0][0], pts[0][1])
    total = sum(
        np.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:])
    )
    if total > 0:
        assert out[-1] == pytest.approx(pts[-1])


def test_trajectory_set_bounds_check():
    with pytest.raises(InvariantViolation):
        TrajectorySet(tracks=(((40.0, 5.0),),), num_frames=4, width=32, height=32)


def test_stationary_click_gives_zero_flow():
    traj = TrajectorySet(tracks=(((12.0, 9.0),),), num_frames=5, width=32, height=32)
    sparse = tracks_to_sparse_flow(traj)
    assert np.all(sparse.flow.data == 0)
    assert sparse.mask[:, 0, 9, 12].tolist() == [1.0] * 4
    assert sparse.mask.sum() == 4


def test_straight_track_sparse_values():
    traj = TrajectorySet(
        tracks=(((10.0, 10.0), (20.0, 10.0)),), num_frames=11, width=32, height=32
    )
    sparse = tracks_to_sparse_flow(traj)
    for t in range(10):
        assert sparse.flow.data[t, 0, 10, 10] == pytest.approx(t + 1)
        assert sparse.flow.data[t, 1, 10, 10] == pytest.approx(0.0)


def test_collision_averaging():
    tr_a = ((5.0, 5.0), (7.0, 5.0))  # displacement (2,0) at final frame
    tr_b = ((5.0, 5.0), (5.0, 7.0))  # displacement (0,2)
    traj = TrajectorySet(tracks=(tr_a, tr_b), num_frames=2, width=16, height=16)
    sparse = tracks_to_sparse_flow(traj)
    assert sparse.flow.data[0, 0, 5, 5] == pytest.approx(1.0)
    assert sparse.flow.data[0, 1, 5, 5] == pytest.approx(1.0)


def test_sparse_flow_zero_outside_mask_enforced():
    flow = np.zeros((1, 2, 16, 16), dtype=np.float32)
    flow[0, 0, 3, 3] = 1.0
    mask = np.zeros((1, 1, 16, 16), dtype=np.float32)
    with pytest.raises(InvariantViolation):
        SparseFlow(flow=FlowField(flow), mask=mask)


def _sparse_from_sources(sources, n_frames, h, w):
    flow = np.zeros((n_frames, 2, h, w), dtype=np.float32)
    mask = np.zeros((n_frames, 1, h, w), dtype=np.float32)
    for (x, y, vx, vy) in sources:
        flow[:, 0, y, x] = vx
        flow[:, 1, y, x] = vy
        mask[:, 0, y, x] = 1.0
    return SparseFlow(flow=FlowField(flow), mask=mask)


def test_densify_single_source_exact_inside_support():
    sparse = _sparse_from_sources([(8, 8, 3.0, -1.0)], 1, 17, 17)
    dense = densify_flow(sparse, sigma=2.0, support_radius=5.0)
    # inside the disc the single-source weight cancels exactly
    assert dense.data[0, 0, 8, 8] == pytest.approx(3.0)
    assert dense.data[0, 0, 8, 11] == pytest.approx(3.0)
    assert dense.data[0, 1, 10, 8] == pytest.approx(-1.0)
    # outside the support radius everything is zero
    assert dense.data[0, 0, 8, 16] == 0.0


def test_densify_antisymmetric_cancellation():
    sparse = _sparse_from_sources([(6, 8, 2.0, 0.0), (10, 8, -2.0, 0.0)], 1, 17, 17)
    dense = densify_flow(sparse, sigma=3.0, support_radius=8.0)
    assert dense.data[0, 0, 8, 8] == pytest.approx(0.0, abs=1e-12)


def test_densify_matches_double_loop_oracle(rng):
    h = w = 32
    for _ in range(3):
        sources = []
        for _ in range(5):
            sources.append(
                (
                    int(rng.integers(0, w)),
                    int(rng.integers(0, h)),
                    float(rng.uniform(-4, 4)),
                    float(rng.uniform(-4, 4)),
                )
            )
        # deduplicate pixels to keep the oracle's source list identical
        seen = {}
        for x, y, vx, vy in sources:
            seen[(x, y)] = (x, y, vx, vy)
        sources = list(seen.values())
        sparse = _sparse_from_sources(sources, 1, h, w)
        dense = densify_flow(sparse, sigma=4.0, support_radius=12.0)
        want = densify_oracle(sources, h, w, sigma=4.0, support=12.0)
        np.testing.assert_allclose(dense.data[0], want, atol=1e-6)


def test_densify_convexity_bound(rng):
    sources = [(4, 4, 5.0, 0.0), (10, 10, -3.0, 2.0), (20, 7, 1.0, 1.0)]
    sparse = _sparse_from_sources(sources, 1, 24, 24)
    dense = densify_flow(sparse, sigma=3.0, support_radius=9.0)
    assert np.abs(dense.data[0, 0]).max() <= 5.0 + 1e-9
    assert np.abs(dense.data[0, 1]).max() <= 2.0 + 1e-9


def test_densify_translation_equivariance():
    src_a = [(6, 6, 2.0, 1.0)]
    src_b = [(9, 11, 2.0, 1.0)]  # shifted by (+3,+5)
    a = densify_flow(_sparse_from_sources(src_a, 1, 32, 32), sigma=2.0, support_radius=6.0)
    b = densify_flow(_sparse_from_sources(src_b, 1, 32, 32), sigma=2.0, support_radius=6.0)
    np.testing.assert_allclose(a.data[0, :, 0:20, 0:20], b.data[0, :, 5:25, 3:23], atol=1e-12)


def test_densify_parameter_validation():
    sparse = _sparse_from_sources([(4, 4, 1.0, 0.0)], 1, 16, 16)
    with pytest.raises(ValueError):
        densify_flow(sparse, sigma=0.0, support_radius=5.0)
    with pytest.raises(ValueError):
        densify_flow(sparse, sigma=4.0, support_radius=2.0)


def test_complete_flow_without_model_is_densify(rng):
    sparse = _sparse_from_sources([(7, 9, 1.5, -0.5)], 2, 24, 24)
    base = densify_flow(sparse)
    out = complete_flow(sparse, model=None)
    np.testing.assert_array_equal(out.data, base.data)


def test_complete_flow_zero_init_model_matches_densify(rng):
    sparse = _sparse_from_sources([(7, 9, 1.5, -0.5)], 2, 24, 24)
    model = FlowCompletionNet(rng=np.random.default_rng(0))
    image = rng.uniform(0, 1, size=(3, 24, 24)).astype(np.float32)
    out = complete_flow(sparse, model=model, image=image)
    base = densify_flow(sparse)
    np.testing.assert_allclose(out.data, base.data, atol=1e-7)


def test_complete_flow_learned_path_needs_image(rng):
    from trajvid.errors import ModelShapeMismatchError

    sparse = _sparse_from_sources([(7, 9, 1.5, -0.5)], 2, 24, 24)
    model = FlowCompletionNet(rng=np.random.default_rng(0))
    with pytest.raises(ModelShapeMismatchError):
        complete_flow(sparse, model=model)


def test_trajectory_json_roundtrip():
    traj = TrajectorySet(
        tracks=(((1.0, 2.0), (3.0, 4.0)), ((5.0, 6.0),)),
        num_frames=8,
        width=32,
        height=32,
    )
    payload = trajectory_to_json(traj)
    assert payload["frames"] == 8
    back = trajectory_from_json(payload, 32, 32)
    assert back == traj


@pytest.mark.parametrize(
    "payload,msg",
    [
        ({}, "frames"),
        ({"frames": 1, "tracks": [[{"x": 0, "y": 0}]]}, "frames"),
        ({"frames": 4, "tracks": []}, "tracks"),
        ({"frames": 4, "tracks": [[{"x": 40, "y": 0}]]}, "bounds"),
        ({"frames": 4, "tracks": [[{"x": 0}]]}, "y"),
    ],
)
def test_trajectory_json_validation_errors(payload, msg):
    with pytest.raises(ValueError, match=msg):
        trajectory_from_json(payload, 32, 32)


@pytest.mark.slow
def test_trained_completion_beats_densifier_on_held_out_scenes():
    from trajvid.data import (
        SceneDistribution,
        clicks_from_ground_truth,
        completion_pairs_from_records,
        make_dataset,
    )
    from trajvid.metrics import flow_error
    from trajvid.trajectory import train_completion_network

    rng = np.random.default_rng(0)
    dist = SceneDistribution(
        height=32, width=32, num_frames=8, max_shapes=1, min_radius=5.0, max_radius=8.0
    )
    ds = make_dataset(120, dist, seed=4)
    train_recs = [ds.record(i) for i in ds.train_indices]
    val_recs = [ds.record(i) for i in ds.val_indices[:8]]
    pairs = completion_pairs_from_records(train_recs, rng)

    model = FlowCompletionNet(hidden=24, rng=np.random.default_rng(1))
    train_completion_network(model, pairs, steps=700, lr=1e-3, seed=0, batch=16)
    train_completion_network(model, pairs, steps=300, lr=3e-4, seed=1, batch=16)

    base_epes, model_epes = [], []
    for record in val_recs:
        traj = clicks_from_ground_truth(record, 3, np.random.default_rng(99))
        sparse = tracks_to_sparse_flow(traj)
        image = np.asarray(record.video.data[0], np.float32)
        base_epes.append(flow_error(densify_flow(sparse), record.flow_gt)[0])
        model_epes.append(flow_error(complete_flow(sparse, model=model, image=image), record.flow_gt)[0])
    assert np.mean(model_epes) < np.mean(base_epes)

    # stationary clicks on a held-out frame: commanded zero motion maps to
    # (at most) 1e-3 of dense motion through the trained path
    record = val_recs[0]
    image = np.asarray(record.video.data[0], np.float32)
    ys, xs = np.nonzero(np.asarray(record.seg0.data[0]))
    anchors = tuple(((float(xs[k]), float(ys[k])),) for k in [0, len(ys) // 2])
    static = TrajectorySet(tracks=anchors, num_frames=8, width=32, height=32)
    out = complete_flow(tracks_to_sparse_flow(static), model=model, image=image)
    assert np.abs(out.data).max() <= 1e-3
