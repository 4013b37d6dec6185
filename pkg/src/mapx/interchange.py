"""Tensor interchange format shared with external consumers.

Each tensor is a separate file of little-endian 32-bit floats in row-major
order; a ``manifest.json`` in the same directory records, per tensor, its
name, shape, dtype, and file name, alongside the scenario hash and any extra
metadata. The format is bit-exact and trivially readable from any language.
"""

from __future__ import annotations

import json
import os

import numpy as np

MANIFEST_NAME = "manifest.json"
DTYPE = "<f4"


def write_tensor(out_dir: str, name: str, array: np.ndarray) -> dict:
    """Write one tensor file; returns its manifest entry."""
    arr = np.ascontiguousarray(np.asarray(array, dtype=DTYPE))
    filename = f"{name}.f32"
    with open(os.path.join(out_dir, filename), "wb") as fh:
        fh.write(arr.tobytes(order="C"))
    return {
        "name": name,
        "file": filename,
        "shape": list(arr.shape),
        "dtype": "float32",
    }


def write_manifest(
    out_dir: str,
    tensors: list[dict],
    scenario_hash: str,
    extra: dict | None = None,
) -> None:
    manifest = {"scenario_hash": scenario_hash, "tensors": tensors}
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(directory: str) -> dict:
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def read_tensor(directory: str, name: str) -> np.ndarray:
    """Read a tensor by manifest name from a directory."""
    manifest = read_manifest(directory)
    for entry in manifest["tensors"]:
        if entry["name"] == name:
            return _read_entry(directory, entry)
    raise KeyError(f"tensor {name!r} not found in {directory}")


def _read_entry(directory: str, entry: dict) -> np.ndarray:
    if entry.get("dtype") != "float32":
        raise ValueError(f"unsupported dtype {entry.get('dtype')!r}")
    path = os.path.join(directory, entry["file"])
    data = np.fromfile(path, dtype=DTYPE)
    shape = tuple(entry["shape"])
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise ValueError(
            f"tensor file {path} holds {data.size} values, manifest says {expected}"
        )
    return data.reshape(shape)


def read_tensor_file(path: str) -> np.ndarray:
    """Read a tensor given its file path, resolving shape via the manifest.

    Falls back to a square 2-D interpretation when no manifest entry names
    the file (for quick ad-hoc scoring of external outputs).
    """
    directory = os.path.dirname(os.path.abspath(path))
    filename = os.path.basename(path)
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        for entry in manifest["tensors"]:
            if entry["file"] == filename:
                return _read_entry(directory, entry)
    data = np.fromfile(path, dtype=DTYPE)
    side = int(round(np.sqrt(data.size)))
    if side * side != data.size:
        raise ValueError(
            f"{path}: no manifest entry and size {data.size} is not square"
        )
    return data.reshape(side, side)
