"""Checkpoint files.

Layout: magic ``GLCK``, u32 LE version, u32 LE header length, UTF-8 JSON
header (kind, config, metadata, tensor directory of name/shape/offset,
payload SHA-256), then the tensors as concatenated float64 LE blocks.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import CheckpointError, CheckpointVersionError, CorruptedCheckpointError, MissingFileError
from .networks import Model, model_from_config

MAGIC = b"GLCK"
VERSION = 1
PREFIX = struct.Struct("<4sII")


@dataclass
class Checkpoint:
    model: Model
    metadata: dict = field(default_factory=dict)
    extra: dict[str, np.ndarray] = field(default_factory=dict)


def save_checkpoint(model: Model, path: str | os.PathLike, metadata: dict | None = None,
                    extra: dict[str, np.ndarray] | None = None) -> None:
    """Write model tensors (parameters and buffers) plus ``extra`` tensors.

    Header JSON is key-sorted, so identical models give identical bytes.
    """
    tensors = {k: np.asarray(v, dtype="<f8") for k, v in model.tensors().items()}
    for k, v in (extra or {}).items():
        if k in tensors:
            raise CheckpointError(f"extra tensor {k!r} collides with a model tensor")
        tensors[k] = np.asarray(v, dtype="<f8")
    directory = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        t = np.ascontiguousarray(tensors[name])
        directory.append({"name": name, "shape": list(t.shape), "offset": offset})
        blobs.append(t.tobytes())
        offset += t.nbytes
    payload = b"".join(blobs)
    header = {
        "kind": model.kind,
        "config": model.config_dict(),
        "metadata": metadata or {},
        "tensors": directory,
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(PREFIX.pack(MAGIC, VERSION, len(hbytes)))
        fh.write(hbytes)
        fh.write(payload)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    if not os.path.exists(path):
        raise MissingFileError(path, "checkpoint")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < PREFIX.size:
        raise CorruptedCheckpointError(f"{path}: file too short")
    magic, version, hlen = PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptedCheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {version}, expected {VERSION}")
    start = PREFIX.size + hlen
    if len(raw) < start:
        raise CorruptedCheckpointError(f"{path}: header truncated")
    try:
        header = json.loads(raw[PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptedCheckpointError(f"{path}: unreadable header") from exc
    payload = raw[start:]
    if len(payload) != header.get("payload_bytes"):
        raise CorruptedCheckpointError(
            f"{path}: payload is {len(payload)} bytes, header says {header.get('payload_bytes')}"
        )
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise CorruptedCheckpointError(f"{path}: payload checksum mismatch")

    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        off = entry["offset"]
        if off + 8 * count > len(payload):
            raise CorruptedCheckpointError(f"{path}: tensor {entry['name']!r} runs past the payload")
        tensors[entry["name"]] = np.frombuffer(payload, dtype="<f8", count=count, offset=off).reshape(shape)

    model = model_from_config(header["kind"], header["config"])
    own = model.tensors()
    for name, dest in own.items():
        if name not in tensors:
            raise CorruptedCheckpointError(f"{path}: missing tensor {name!r}")
        if tensors[name].shape != dest.shape:
            raise CorruptedCheckpointError(f"{path}: tensor {name!r} has shape {tensors[name].shape}")
        dest[...] = tensors[name]
    extra = {k: v.astype(np.float64) for k, v in tensors.items() if k not in own}
    return Checkpoint(model, header.get("metadata", {}), extra)
