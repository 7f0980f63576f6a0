"""Binary embedding matrix files.

Layout (little-endian): magic ``GLNE``, u32 version (1), u32 count, u32 dim,
then ``count * dim`` float32 values in row-major order.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import BadMagicError, EmbeddingFormatError, MissingFileError, TruncatedFileError

MAGIC = b"GLNE"
VERSION = 1
HEADER = struct.Struct("<4sIII")


def write_embeddings(path: str | os.PathLike, matrix: np.ndarray) -> None:
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise EmbeddingFormatError(f"embedding matrix must be 2-D, got shape {m.shape}")
    m = m.astype("<f4", copy=False)
    if not np.all(np.isfinite(m)):
        raise EmbeddingFormatError("embedding matrix contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, m.shape[0], m.shape[1]))
        fh.write(np.ascontiguousarray(m).tobytes())


def read_header(path: str | os.PathLike) -> tuple[int, int]:
    """Return ``(count, dim)`` after validating magic, version and file size."""
    if not os.path.exists(path):
        raise MissingFileError(path, "embedding file")
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated")
    magic, version, count, dim = HEADER.unpack(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    expected = HEADER.size + 4 * count * dim
    actual = os.path.getsize(path)
    if actual < expected:
        raise TruncatedFileError(f"{path}: payload truncated ({actual} < {expected} bytes)")
    if actual > expected:
        raise EmbeddingFormatError(f"{path}: {actual - expected} trailing bytes")
    return count, dim


def read_embeddings(path: str | os.PathLike) -> np.ndarray:
    """Read an embedding file into a ``(count, dim)`` float32 array."""
    count, dim = read_header(path)
    with open(path, "rb") as fh:
        fh.seek(HEADER.size)
        payload = fh.read()
    values = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float32)
    if not np.all(np.isfinite(values)):
        raise EmbeddingFormatError(f"{path}: non-finite values in payload")
    return values
