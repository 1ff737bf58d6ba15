"""Secondary acceptance: the browser client against a live server.

Builds the frontend with tsc, boots the real HTTP service on a smoke
checkpoint, then drives the full happy path through the client's own
compiled modules under node.
"""

import os
import shutil
import socket
import subprocess
import time
from pathlib import Path

import pytest

from trajvid.data import SceneDistribution, make_dataset
from trajvid.pipeline import GenerationPipeline, make_config
from trajvid.pngio import write_png_rgb

FRONTEND_DIR = Path(__file__).parent.parent / "frontend"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or shutil.which("tsc") is None,
    reason="node and tsc are required for the studio round-trip",
)


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def built_frontend():
    subprocess.run(["npm", "run", "build"], cwd=FRONTEND_DIR, check=True, capture_output=True)
    client = FRONTEND_DIR / "dist" / "tests" / "e2e_client.js"
    assert client.exists()
    return client


@pytest.fixture(scope="module")
def smoke_server(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("studio")
    config = make_config(
        height=16, width=16, num_frames=4, channel_schedule=(6, 8), base_channels=6,
        unet_channels=(8, 12, 16), num_steps=40, sample_steps=6, seg_channels=4, temb_dim=16,
    )
    pipe = GenerationPipeline(config, seed=5)
    ckpt = tmp / "smoke.zip"
    pipe.save(ckpt, extra_meta={"step": 0})

    dist = SceneDistribution(height=16, width=16, num_frames=4, max_shapes=1,
                             min_radius=3.0, max_radius=5.0)
    record = make_dataset(1, dist, seed=3).record(0)
    image_path = tmp / "frame0.png"
    write_png_rgb(image_path, record.video.data[0])

    port = _free_port()
    proc = subprocess.Popen(
        ["python3", "-m", "trajvid.cli", "serve", "--checkpoint", str(ckpt), "--port", str(port)],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
    )
    base = f"http://127.0.0.1:{port}"
    try:
        deadline = time.time() + 30
        import httpx

        while time.time() < deadline:
            if proc.poll() is not None:
                out = proc.stdout.read().decode()
                raise RuntimeError(f"server died at startup: {out}")
            try:
                httpx.get(base + "/api/sessions/snone", timeout=1.0)
                break
            except Exception:
                time.sleep(0.3)
        else:
            raise TimeoutError("server did not come up")
        yield base, image_path
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def test_studio_full_happy_path(built_frontend, smoke_server):
    import sys

    base, image_path = smoke_server
    env = dict(os.environ)
    env.update({
        "STUDIO_SERVER": base,
        "STUDIO_IMAGE": str(image_path),
        "STUDIO_FRAMES": "4",
    })
    result = subprocess.run(
        ["node", str(built_frontend)],
        env=env,
        capture_output=True,
        text=True,
        timeout=300,
    )
    ok = result.returncode == 0 and "studio happy path OK" in result.stdout
    print(
        f"[ACCEPTANCE] studio round-trip: {'PASS' if ok else 'FAIL'}",
        file=sys.__stdout__,
        flush=True,
    )
    assert ok, f"stdout: {result.stdout}\nstderr: {result.stderr}"
