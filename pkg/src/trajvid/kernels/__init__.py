"""Hot numeric kernels with two interchangeable backends.

Both backends implement the same function table and are tested against each
other, so backend choice trades only speed, never results.

Selection via the ``TRAJVID_NUMBA`` environment variable:

- unset or ``auto``: measured per-kernel defaults; convolutions run on the
  pure-numpy path (shifted GEMMs inside BLAS), scatter-style kernels
  (splatting, densification) run on the numba JIT path.  See
  ``python -m trajvid.benchmarks`` for the numbers behind this split.
- ``1``/``true``: force the numba path for every kernel (error if numba is
  not importable).
- ``0``/``false``: force the pure-numpy fallback for every kernel.

Kernel table (shapes use C=channels, H/W=spatial, D=depth/frames):

- ``conv2d_forward(x, w, b, stride, pad)`` / ``conv2d_backward``
- ``conv3d_forward(x, w, b, pad)`` / ``conv3d_backward`` (stride 1)
- ``splat_forward(feat, flow)`` -> (acc, wsum): forward bilinear scatter
- ``splat_backward(gacc, flow)`` -> gfeat: the exact adjoint gather
- ``densify_forward(sx, sy, vals, h, w, sigma, support)`` -> (acc, wsum)
"""

import os

from trajvid.kernels import numpy_backend

_CONV_KERNELS = ("conv2d_forward", "conv2d_backward", "conv3d_forward", "conv3d_backward")
_SCATTER_KERNELS = ("splat_forward", "splat_backward", "densify_forward")
_KERNEL_NAMES = _CONV_KERNELS + _SCATTER_KERNELS


def _load_numba_backend(required: bool):
    try:
        from trajvid.kernels import numba_backend

        return numba_backend
    except ImportError:
        if required:
            raise
        return None


def _select_table() -> tuple[dict, str]:
    flag = os.environ.get("TRAJVID_NUMBA", "auto").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return {name: getattr(numpy_backend, name) for name in _KERNEL_NAMES}, "numpy"
    if flag in ("1", "true", "yes", "on"):
        nb = _load_numba_backend(required=True)
        return {name: getattr(nb, name) for name in _KERNEL_NAMES}, "numba"
    nb = _load_numba_backend(required=False)
    if nb is None:
        return {name: getattr(numpy_backend, name) for name in _KERNEL_NAMES}, "numpy"
    table = {name: getattr(numpy_backend, name) for name in _CONV_KERNELS}
    table.update({name: getattr(nb, name) for name in _SCATTER_KERNELS})
    return table, "auto"


_TABLE, _backend_name = _select_table()


def backend_name() -> str:
    """Active selection: 'auto', 'numba' or 'numpy'."""
    return _backend_name


def get_backend(name: str):
    """Fetch a backend module by name, independent of the active default."""
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        return _load_numba_backend(required=True)
    raise ValueError(f"unknown kernel backend {name!r}")


conv2d_forward = _TABLE["conv2d_forward"]
conv2d_backward = _TABLE["conv2d_backward"]
conv3d_forward = _TABLE["conv3d_forward"]
conv3d_backward = _TABLE["conv3d_backward"]
splat_forward = _TABLE["splat_forward"]
splat_backward = _TABLE["splat_backward"]
densify_forward = _TABLE["densify_forward"]

__all__ = list(_KERNEL_NAMES) + ["backend_name", "get_backend"]
