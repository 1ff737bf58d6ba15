"""Kernel benchmark: numpy fallback vs numba JIT, side by side.

Run with ``python -m trajvid.benchmarks``.  The table this prints is the
basis for the 'auto' backend split (convolutions on BLAS, scatter kernels
on numba); rerun it on your own machine before overriding TRAJVID_NUMBA.
"""

from __future__ import annotations

import time

import numpy as np

from trajvid.kernels import backend_name, get_backend


def _timeit(fn, reps: int = 7) -> float:
    fn()  # warmup / JIT compile
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def build_cases(rng: np.random.Generator):
    x2 = rng.normal(size=(16, 24, 32, 32)).astype(np.float32)
    w2 = rng.normal(size=(24, 24, 3, 3)).astype(np.float32)
    b2 = np.zeros(24, np.float32)
    gy2 = rng.normal(size=(16, 24, 32, 32)).astype(np.float32)
    x2s = rng.normal(size=(28, 16, 32, 32)).astype(np.float32)
    w2s = rng.normal(size=(32, 16, 3, 3)).astype(np.float32)
    b2s = np.zeros(32, np.float32)
    x3 = rng.normal(size=(4, 16, 7, 16, 16)).astype(np.float32)
    w3 = rng.normal(size=(16, 16, 3, 3, 3)).astype(np.float32)
    b3 = np.zeros(16, np.float32)
    gy3 = rng.normal(size=(4, 16, 7, 16, 16)).astype(np.float32)
    feat = rng.normal(size=(24, 32, 32)).astype(np.float32)
    feat_big = rng.normal(size=(16, 128, 128)).astype(np.float32)
    flow = rng.normal(scale=2, size=(2, 32, 32)).astype(np.float32)
    flow_big = rng.normal(scale=4, size=(2, 128, 128)).astype(np.float32)
    sx = rng.uniform(0, 255, 20)
    sy = rng.uniform(0, 255, 20)
    vals = rng.normal(size=(20, 2))
    return [
        ("conv2d fwd  (16,24,32,32) k3", lambda b: b.conv2d_forward(x2, w2, b2, 1, 1)),
        ("conv2d bwd  (16,24,32,32) k3", lambda b: b.conv2d_backward(x2, w2, gy2, 1, 1)),
        ("conv2d fwd  (28,16,32,32) s2", lambda b: b.conv2d_forward(x2s, w2s, b2s, 2, 1)),
        ("conv3d fwd  (4,16,7,16,16) k3", lambda b: b.conv3d_forward(x3, w3, b3, (1, 1, 1))),
        ("conv3d bwd  (4,16,7,16,16) k3", lambda b: b.conv3d_backward(x3, w3, gy3, (1, 1, 1))),
        ("splat fwd   (24,32,32)", lambda b: b.splat_forward(feat, flow)),
        ("splat bwd   (24,32,32)", lambda b: b.splat_backward(feat, flow)),
        ("splat fwd   (16,128,128)", lambda b: b.splat_forward(feat_big, flow_big)),
        ("densify     20 src @256x256", lambda b: b.densify_forward(sx, sy, vals, 256, 256, 8.0, 24.0)),
    ]


def main():
    rng = np.random.default_rng(0)
    np_b = get_backend("numpy")
    try:
        nb_b = get_backend("numba")
    except ImportError:
        nb_b = None
    print(f"active selection: {backend_name()}")
    header = f"{'kernel':32s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    for name, fn in build_cases(rng):
        t_np = _timeit(lambda: fn(np_b))
        if nb_b is None:
            print(f"{name:32s} {t_np:10.3f} {'n/a':>10s} {'':>9s}")
            continue
        t_nb = _timeit(lambda: fn(nb_b))
        ratio = t_np / t_nb
        print(f"{name:32s} {t_np:10.3f} {t_nb:10.3f} {ratio:8.2f}x")
    print("\nspeedup > 1 means the numba path is faster for that kernel.")


if __name__ == "__main__":
    main()
