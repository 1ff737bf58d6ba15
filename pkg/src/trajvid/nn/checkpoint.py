"""Checkpoint archive: a zip holding named parameter tensors plus a manifest.

Layout inside the archive:

    manifest.json          {"format": "trajvid-checkpoint", "version": 1,
                            "meta": {...},
                            "tensors": [{"name", "shape", "dtype", "file"}]}
    tensors/<index>.npy    one standard .npy per tensor, row-major

The manifest carries enough to rebuild every tensor without numpy-specific
knowledge: names map to files, dtypes are numpy dtype strings, shapes are
plain lists.  ``meta`` stores run configuration and ablation flags.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

FORMAT_NAME = "trajvid-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(path, tensors: dict, meta: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for idx, (name, arr) in enumerate(sorted(tensors.items())):
            arr = np.asarray(arr)
            file_name = f"tensors/{idx:05d}.npy"
            buf = io.BytesIO()
            np.save(buf, arr)
            zf.writestr(file_name, buf.getvalue())
            entries.append(
                {"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype), "file": file_name}
            )
        manifest = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "meta": meta or {},
            "tensors": entries,
        }
        zf.writestr("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(path):
    """Returns (tensors: dict[str, ndarray], meta: dict)."""
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != FORMAT_NAME:
            raise ValueError(f"{path} is not a {FORMAT_NAME} archive")
        tensors = {}
        for entry in manifest["tensors"]:
            arr = np.load(io.BytesIO(zf.read(entry["file"])))
            if list(arr.shape) != entry["shape"] or str(arr.dtype) != entry["dtype"]:
                raise ValueError(f"tensor {entry['name']}: payload disagrees with manifest")
            tensors[entry["name"]] = arr
        return tensors, manifest.get("meta", {})


def read_manifest(path) -> dict:
    with zipfile.ZipFile(path, "r") as zf:
        return json.loads(zf.read("manifest.json"))
