"""Checkpoint serialization: a JSON manifest plus raw float64 blobs.

Layout under a checkpoint directory::

    manifest.json          metadata, group/tensor index, per-blob sha256
    blobs/000.f64          little-endian float64, C order
    blobs/001.f64
    ...

Writing the same parameters twice produces byte-identical files: the
manifest is serialized with sorted keys and a fixed layout, and blobs
are raw buffers with no timestamps or headers.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..exceptions import ConfigError
from .params import ParameterSet

_MANIFEST = "manifest.json"
_FORMAT_VERSION = 1


def _blob_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(directory, groups: dict, meta: dict | None = None) -> None:
    """Write named ParameterSet groups and a metadata dict to ``directory``."""
    directory = Path(directory)
    blob_dir = directory / "blobs"
    blob_dir.mkdir(parents=True, exist_ok=True)
    index = {}
    blob_idx = 0
    for gname in groups:
        pset = groups[gname]
        entries = []
        for p in pset:
            raw = _blob_bytes(p.tensor.data)
            fname = f"{blob_idx:03d}.f64"
            (blob_dir / fname).write_bytes(raw)
            entries.append({
                "name": p.name,
                "role": p.role,
                "shape": list(p.tensor.data.shape),
                "file": f"blobs/{fname}",
                "sha256": hashlib.sha256(raw).hexdigest(),
            })
            blob_idx += 1
        index[gname] = entries
    manifest = {
        "format_version": _FORMAT_VERSION,
        "meta": meta or {},
        "groups": index,
    }
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    (directory / _MANIFEST).write_text(text, encoding="utf-8")


def load_checkpoint(directory):
    """Read a checkpoint directory back into (groups, meta).

    Returns
    -------
    groups : dict of str -> ParameterSet
    meta : dict
    """
    directory = Path(directory)
    manifest_path = directory / _MANIFEST
    if not manifest_path.is_file():
        raise ConfigError(f"no checkpoint manifest at {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"corrupt checkpoint manifest: {exc}") from exc
    if manifest.get("format_version") != _FORMAT_VERSION:
        raise ConfigError(
            f"unsupported checkpoint format {manifest.get('format_version')!r}"
        )
    groups = {}
    for gname, entries in manifest["groups"].items():
        pset = ParameterSet()
        for entry in entries:
            blob_path = directory / entry["file"]
            if not blob_path.is_file():
                raise ConfigError(f"missing checkpoint blob {blob_path}")
            raw = blob_path.read_bytes()
            if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
                raise ConfigError(f"checksum mismatch for {entry['name']!r}")
            shape = tuple(entry["shape"])
            expected = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
            if len(raw) != expected:
                raise ConfigError(
                    f"blob size {len(raw)} does not match shape {shape} for {entry['name']!r}"
                )
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            pset.add(entry["name"], arr, entry["role"])
        groups[gname] = pset
    return groups, manifest.get("meta", {})


def parameter_checksum(psets, names=None) -> str:
    """sha256 over the concatenated raw bytes of selected parameters.

    Parameters
    ----------
    psets : iterable of ParameterSet
        Scanned in order.
    names : container of str, optional
        If given, only parameters whose name is in the container are
        hashed; otherwise all of them are.
    """
    digest = hashlib.sha256()
    for pset in psets:
        for p in pset:
            if names is not None and p.name not in names:
                continue
            digest.update(p.name.encode("utf-8"))
            digest.update(_blob_bytes(p.tensor.data))
    return digest.hexdigest()
