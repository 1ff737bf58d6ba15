"""HTTP generation service consumed by the trajectory studio client.

Sessions hold an uploaded first frame; trajectories validate against the
shared JSON schema; jobs run one at a time through a FIFO worker thread.
Job state transitions are monotone (queued -> running -> done | failed) and
results stay in memory for the session's lifetime.
"""

from __future__ import annotations

import base64
import binascii
import itertools
import queue
import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, Response

from trajvid.config import RunConfig
from trajvid.core import Frame
from trajvid.floio import FLO_MAGIC
from trajvid.pipeline import GenerationPipeline
from trajvid.pngio import decode_png_rgb, png_bytes_rgb
from trajvid.providers import LuminanceBandProvider
from trajvid.trajectory import (
    complete_flow,
    trajectory_from_json,
    tracks_to_sparse_flow,
)
from trajvid.viz import motion_heatmap

PREVIEW_MAX_VECTORS = 64


@dataclass
class Session:
    id: str
    frame: Frame
    trajectories: dict = field(default_factory=dict)


@dataclass
class Job:
    id: str
    session_id: str
    trajectory_id: str
    seed: int
    steps: int | None
    status: str = "queued"
    progress: float = 0.0
    error: str | None = None
    frames_png: list = field(default_factory=list)
    heatmap_png: bytes | None = None
    flow_bytes: list = field(default_factory=list)


def _flow_preview(sparse, flow) -> list[dict]:
    """Downsampled arrow set: source pixels with their final displacement."""
    last = flow.data[-1]
    ys, xs = np.nonzero(sparse.mask[-1, 0])
    order = np.argsort(ys * flow.width + xs)
    arrows = []
    stride = max(1, len(order) // PREVIEW_MAX_VECTORS)
    for k in order[::stride][:PREVIEW_MAX_VECTORS]:
        y, x = int(ys[k]), int(xs[k])
        arrows.append(
            {"x": x, "y": y, "dx": float(last[0, y, x]), "dy": float(last[1, y, x])}
        )
    return arrows


def _flo_bytes(flow_frame: np.ndarray) -> bytes:
    h, w = flow_frame.shape[1], flow_frame.shape[2]
    inter = np.empty((h, w, 2), dtype="<f4")
    inter[:, :, 0] = flow_frame[0]
    inter[:, :, 1] = flow_frame[1]
    return (
        np.array([FLO_MAGIC], dtype="<f4").tobytes()
        + np.array([w, h], dtype="<i4").tobytes()
        + inter.tobytes()
    )


def build_app(checkpoint_path, run_config: RunConfig | None = None,
              pipeline: GenerationPipeline | None = None) -> FastAPI:
    cfg = run_config or RunConfig()
    pipe = pipeline or GenerationPipeline.from_checkpoint(checkpoint_path)
    providers = LuminanceBandProvider()

    app = FastAPI(title="trajvid generation service")
    state = {
        "sessions": {},
        "jobs": {},
        "lock": threading.Lock(),
        "queue": queue.Queue(),
        "ids": itertools.count(1),
    }

    def worker():
        while True:
            job_id = state["queue"].get()
            if job_id is None:
                return
            with state["lock"]:
                job = state["jobs"][job_id]
                session = state["sessions"][job.session_id]
                traj = session.trajectories[job.trajectory_id]
                job.status = "running"
                job.progress = 0.1
            try:
                sparse = tracks_to_sparse_flow(traj)
                flow = complete_flow(sparse, sigma=cfg.trajectory.sigma,
                                     support_radius=cfg.trajectory.support_radius)
                video = pipe.generate(session.frame, flow, providers,
                                      seed=job.seed, steps=job.steps)
                frames = [png_bytes_rgb(video.data[t]) for t in range(video.num_frames)]
                heat = png_bytes_rgb(motion_heatmap(video.data[0], video.data[-1]))
                flo = [_flo_bytes(flow.data[t]) for t in range(flow.data.shape[0])]
                with state["lock"]:
                    job.frames_png = frames
                    job.heatmap_png = heat
                    job.flow_bytes = flo
                    job.progress = 1.0
                    job.status = "done"
            except Exception as e:  # failure is a job state, not a server crash
                with state["lock"]:
                    job.error = f"{type(e).__name__}: {e}"
                    job.status = "failed"

    thread = threading.Thread(target=worker, daemon=True)
    thread.start()
    app.state.store = state
    app.state.worker = thread

    def _session_or_404(session_id: str) -> Session:
        session = state["sessions"].get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return session

    def _job_or_404(job_id: str) -> Job:
        job = state["jobs"].get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        return job

    @app.post("/api/sessions")
    async def create_session(request: Request):
        content_type = request.headers.get("content-type", "")
        png: bytes | None = None
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("image")
            if upload is None:
                raise HTTPException(status_code=422, detail="multipart field 'image' missing")
            png = await upload.read()
        else:
            try:
                payload = await request.json()
            except Exception:
                raise HTTPException(status_code=422, detail="body must be JSON or multipart")
            if not isinstance(payload, dict) or "image" not in payload:
                raise HTTPException(status_code=422, detail="missing field 'image'")
            try:
                png = base64.b64decode(payload["image"], validate=True)
            except (binascii.Error, TypeError):
                raise HTTPException(status_code=422, detail="field 'image' is not valid base64")
        try:
            frame = Frame(decode_png_rgb(png))
        except Exception as e:
            raise HTTPException(status_code=422, detail=f"not a usable PNG image: {e}")
        with state["lock"]:
            session_id = f"s{next(state['ids'])}"
            state["sessions"][session_id] = Session(id=session_id, frame=frame)
        return {"session_id": session_id, "width": frame.width, "height": frame.height}

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        session = _session_or_404(session_id)
        return {
            "session_id": session.id,
            "width": session.frame.width,
            "height": session.frame.height,
            "trajectory_ids": sorted(session.trajectories),
        }

    @app.post("/api/sessions/{session_id}/trajectories")
    async def post_trajectories(session_id: str, request: Request):
        session = _session_or_404(session_id)
        try:
            payload = await request.json()
        except Exception:
            raise HTTPException(status_code=422, detail="body must be JSON")
        try:
            traj = trajectory_from_json(payload, session.frame.width, session.frame.height)
        except ValueError as e:
            return JSONResponse(status_code=422, content={"detail": str(e)})
        if traj.num_frames != pipe.config.num_frames:
            return JSONResponse(
                status_code=422,
                content={
                    "detail": f"'frames' must equal the model's clip length "
                    f"{pipe.config.num_frames}, got {traj.num_frames}"
                },
            )
        sparse = tracks_to_sparse_flow(traj)
        flow = complete_flow(sparse, sigma=cfg.trajectory.sigma,
                             support_radius=cfg.trajectory.support_radius)
        with state["lock"]:
            traj_id = f"t{next(state['ids'])}"
            session.trajectories[traj_id] = traj
        return {"trajectory_id": traj_id, "sparse_flow_preview": _flow_preview(sparse, flow)}

    @app.post("/api/sessions/{session_id}/jobs")
    async def post_job(session_id: str, request: Request):
        session = _session_or_404(session_id)
        try:
            payload = await request.json()
        except Exception:
            raise HTTPException(status_code=422, detail="body must be JSON")
        traj_id = payload.get("trajectory_id")
        if traj_id not in session.trajectories:
            raise HTTPException(status_code=422, detail=f"unknown trajectory_id {traj_id!r}")
        seed = payload.get("seed", 0)
        steps = payload.get("steps")
        if not isinstance(seed, int):
            raise HTTPException(status_code=422, detail="'seed' must be an integer")
        if steps is not None and (not isinstance(steps, int) or steps < 1):
            raise HTTPException(status_code=422, detail="'steps' must be a positive integer")
        with state["lock"]:
            job_id = f"j{next(state['ids'])}"
            state["jobs"][job_id] = Job(
                id=job_id, session_id=session_id, trajectory_id=traj_id, seed=seed, steps=steps
            )
        state["queue"].put(job_id)
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        job = _job_or_404(job_id)
        body = {"status": job.status, "progress": job.progress}
        if job.error is not None:
            body["error"] = job.error
        return body

    def _finished_job(job_id: str) -> Job:
        job = _job_or_404(job_id)
        if job.status == "failed":
            raise HTTPException(status_code=409, detail=f"job failed: {job.error}")
        if job.status != "done":
            raise HTTPException(status_code=409, detail=f"job is {job.status}")
        return job

    @app.get("/api/jobs/{job_id}/frames/{k}")
    def get_frame(job_id: str, k: int):
        job = _finished_job(job_id)
        if not (0 <= k < len(job.frames_png)):
            raise HTTPException(status_code=404, detail=f"frame {k} out of range")
        return Response(job.frames_png[k], media_type="image/png")

    @app.get("/api/jobs/{job_id}/heatmap")
    def get_heatmap(job_id: str):
        job = _finished_job(job_id)
        return Response(job.heatmap_png, media_type="image/png")

    @app.get("/api/jobs/{job_id}/flow/{t}")
    def get_flow(job_id: str, t: int):
        job = _finished_job(job_id)
        if not (0 <= t < len(job.flow_bytes)):
            raise HTTPException(status_code=404, detail=f"flow frame {t} out of range")
        return Response(job.flow_bytes[t], media_type="application/octet-stream")

    return app
