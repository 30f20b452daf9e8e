"""Checkpoint container.

A checkpoint ``<stem>`` is two files:

``<stem>.json``
    manifest with ``format``, ``seed``, ``config_hash``, free-form ``meta`` and
    ``layers``: an ordered list of ``{"name", "shape", "offset"}`` entries,
    offsets counted in float64 elements.
``<stem>.bin``
    every parameter flattened row-major as little-endian float64,
    concatenated in manifest order.

Both files are byte-for-byte reproducible for equal parameters.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import CheckpointError

FORMAT = "gapcast-checkpoint/1"


def _paths(stem: str | Path) -> tuple[Path, Path]:
    stem = Path(stem)
    if stem.suffix in (".json", ".bin"):
        stem = stem.with_suffix("")
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def save_checkpoint(stem: str | Path, arrays: Mapping[str, np.ndarray], *, seed: int,
                    config_hash: str, meta: dict | None = None) -> Path:
    manifest_path, blob_path = _paths(stem)
    layers, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        layers.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    blob = b"".join(chunks)
    manifest = {
        "format": FORMAT,
        "seed": seed,
        "config_hash": config_hash,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "meta": meta or {},
        "layers": layers,
    }
    blob_path.write_bytes(blob)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_checkpoint(stem: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    manifest_path, blob_path = _paths(stem)
    try:
        manifest = json.loads(manifest_path.read_text())
        blob = blob_path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {manifest_path.with_suffix('')}: {exc}") from exc
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format')!r}")
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise CheckpointError(f"{blob_path} does not match its manifest digest")
    flat = np.frombuffer(blob, dtype="<f8")
    arrays = {}
    for layer in manifest["layers"]:
        shape = tuple(layer["shape"])
        size = int(np.prod(shape, dtype=np.int64))
        start = layer["offset"]
        arrays[layer["name"]] = flat[start:start + size].reshape(shape).astype(np.float64)
    return manifest, arrays


def assign_arrays(params: Mapping[str, "object"], arrays: Mapping[str, np.ndarray]) -> None:
    """Copy ``arrays`` into same-named parameter tensors, refusing any mismatch."""
    missing = sorted(set(params) - set(arrays))
    extra = sorted(set(arrays) - set(params))
    if missing or extra:
        raise CheckpointError(f"architecture mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
    for name, tensor in params.items():
        if tensor.data.shape != arrays[name].shape:
            raise CheckpointError(
                f"architecture mismatch at {name}: model {tensor.data.shape} vs checkpoint {arrays[name].shape}")
    for name, tensor in params.items():
        tensor.data = arrays[name].copy()
