import base64
import struct
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from trajvid.config import RunConfig
from trajvid.data import SceneDistribution, make_dataset
from trajvid.pipeline import GenerationPipeline, make_config
from trajvid.pngio import decode_png_rgb, png_bytes_rgb
from trajvid.service import build_app


@pytest.fixture(scope="module")
def client():
    config = make_config(
        height=16, width=16, num_frames=3, channel_schedule=(6, 8), base_channels=6,
        unet_channels=(8, 12, 16), num_steps=40, sample_steps=6, seg_channels=4, temb_dim=16,
    )
    pipe = GenerationPipeline(config, seed=5)
    app = build_app(None, run_config=RunConfig(), pipeline=pipe)
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def frame_png():
    dist = SceneDistribution(height=16, width=16, num_frames=3, max_shapes=1,
                             min_radius=3.0, max_radius=5.0)
    record = make_dataset(1, dist, seed=3).record(0)
    return png_bytes_rgb(record.video.data[0])


def _make_session(client, frame_png):
    payload = {"image": base64.b64encode(frame_png).decode()}
    resp = client.post("/api/sessions", json=payload)
    assert resp.status_code == 200
    return resp.json()


def _wait_for(client, job_id, timeout=120.0):
    deadline = time.time() + timeout
    seen = []
    while time.time() < deadline:
        body = client.get(f"/api/jobs/{job_id}").json()
        if not seen or seen[-1] != body["status"]:
            seen.append(body["status"])
        if body["status"] in ("done", "failed"):
            return body, seen
        time.sleep(0.1)
    raise TimeoutError(f"job {job_id} did not finish; transitions {seen}")


def test_session_roundtrip(client, frame_png):
    body = _make_session(client, frame_png)
    assert body["width"] == 16 and body["height"] == 16
    echo = client.get(f"/api/sessions/{body['session_id']}").json()
    assert echo["width"] == 16 and echo["height"] == 16


def test_session_rejects_garbage(client):
    resp = client.post("/api/sessions", json={"image": "not-base64!!"})
    assert resp.status_code == 422
    resp = client.post("/api/sessions", json={})
    assert resp.status_code == 422


def test_session_multipart_upload(client, frame_png):
    resp = client.post("/api/sessions", files={"image": ("f.png", frame_png, "image/png")})
    assert resp.status_code == 200
    assert resp.json()["width"] == 16


def test_unknown_session_404(client):
    assert client.get("/api/sessions/s999999").status_code == 404


def test_trajectory_validation_and_preview(client, frame_png):
    session = _make_session(client, frame_png)
    sid = session["session_id"]

    out_of_bounds = {"frames": 3, "tracks": [[{"x": 99, "y": 0}]]}
    resp = client.post(f"/api/sessions/{sid}/trajectories", json=out_of_bounds)
    assert resp.status_code == 422
    assert "tracks[0][0]" in resp.json()["detail"]

    wrong_frames = {"frames": 7, "tracks": [[{"x": 2, "y": 2}]]}
    resp = client.post(f"/api/sessions/{sid}/trajectories", json=wrong_frames)
    assert resp.status_code == 422

    good = {"frames": 3, "tracks": [[{"x": 4, "y": 4}, {"x": 9, "y": 4}]]}
    resp = client.post(f"/api/sessions/{sid}/trajectories", json=good)
    assert resp.status_code == 200
    body = resp.json()
    assert body["trajectory_id"]
    arrows = body["sparse_flow_preview"]
    assert arrows and arrows[0]["x"] == 4 and arrows[0]["y"] == 4
    assert arrows[0]["dx"] == pytest.approx(5.0)


def test_full_generation_happy_path(client, frame_png):
    session = _make_session(client, frame_png)
    sid = session["session_id"]
    traj = client.post(
        f"/api/sessions/{sid}/trajectories",
        json={"frames": 3, "tracks": [[{"x": 4, "y": 8}, {"x": 10, "y": 8}]]},
    ).json()
    job = client.post(
        f"/api/sessions/{sid}/jobs",
        json={"trajectory_id": traj["trajectory_id"], "seed": 7, "steps": 4},
    ).json()
    body, transitions = _wait_for(client, job["job_id"])
    assert body["status"] == "done"
    # monotone: queued (possibly unseen) -> running (possibly unseen) -> done
    allowed = ["queued", "running", "done"]
    assert [s for s in allowed if s in transitions] == transitions

    frames = []
    for k in range(3):
        resp = client.get(f"/api/jobs/{job['job_id']}/frames/{k}")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        frames.append(decode_png_rgb(resp.content))
    # frame 0 echoes the uploaded image
    np.testing.assert_allclose(frames[0], decode_png_rgb(frame_png), atol=1e-6)

    heat = client.get(f"/api/jobs/{job['job_id']}/heatmap")
    assert heat.status_code == 200

    flo = client.get(f"/api/jobs/{job['job_id']}/flow/0")
    assert flo.status_code == 200
    magic, w, h = struct.unpack("<fii", flo.content[:12])
    assert magic == pytest.approx(202021.25)
    assert (w, h) == (16, 16)

    assert client.get(f"/api/jobs/{job['job_id']}/frames/99").status_code == 404


def test_polling_is_idempotent(client, frame_png):
    session = _make_session(client, frame_png)
    sid = session["session_id"]
    traj = client.post(
        f"/api/sessions/{sid}/trajectories",
        json={"frames": 3, "tracks": [[{"x": 8, "y": 8}]]},
    ).json()
    job = client.post(
        f"/api/sessions/{sid}/jobs", json={"trajectory_id": traj["trajectory_id"], "seed": 1}
    ).json()
    body, _ = _wait_for(client, job["job_id"])
    for _ in range(3):
        again = client.get(f"/api/jobs/{job['job_id']}").json()
        assert again == body


def test_job_with_unknown_trajectory(client, frame_png):
    session = _make_session(client, frame_png)
    resp = client.post(
        f"/api/sessions/{session['session_id']}/jobs", json={"trajectory_id": "t404", "seed": 0}
    )
    assert resp.status_code == 422


def test_failed_job_returns_recorded_error(client, frame_png, monkeypatch):
    session = _make_session(client, frame_png)
    sid = session["session_id"]
    traj = client.post(
        f"/api/sessions/{sid}/trajectories",
        json={"frames": 3, "tracks": [[{"x": 8, "y": 8}]]},
    ).json()
    # steps=1 with a poisoned pipeline: force a failure inside the worker
    orig = GenerationPipeline.generate

    def boom(self, *a, **kw):
        raise RuntimeError("synthetic failure for the test")

    GenerationPipeline.generate = boom
    try:
        job = client.post(
            f"/api/sessions/{sid}/jobs", json={"trajectory_id": traj["trajectory_id"], "seed": 0}
        ).json()
        body, _ = _wait_for(client, job["job_id"])
    finally:
        GenerationPipeline.generate = orig
    assert body["status"] == "failed"
    assert "synthetic failure" in body["error"]
    resp = client.get(f"/api/jobs/{job['job_id']}/frames/0")
    assert resp.status_code == 409
    assert "synthetic failure" in resp.json()["detail"]
