"""Binary parameter checkpoints.

Layout (little-endian throughout):

  magic   4 bytes  b"MRCK"
  version u32      format version (currently 1)
  meta    u32 length + UTF-8 JSON (free-form metadata: stage tag, feature
                   manifest, network shapes)
  count   u32      number of tensors
  entry*  u16 name length + name UTF-8
          u8  dtype code (0 = float32, 1 = float64)
          u8  ndim, then u32 per dimension
          raw tensor bytes, C order
  digest  16 bytes blake2b of everything above

The digest makes snapshots tamper-evident; the self-play pool stores it as
the content hash of each member.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .layers import Params

MAGIC = b"MRCK"
VERSION = 1
_DTYPES = {0: np.float32, 1: np.float64}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(ValueError):
    """Malformed, truncated, or corrupted checkpoint file."""


def save_checkpoint(path: str | Path, params: Params, meta: dict | None = None) -> str:
    """Write params (+ JSON metadata); returns the content hash hex digest."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    blob += struct.pack("<I", len(meta_bytes)) + meta_bytes
    blob += struct.pack("<I", len(params))
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name])
        if arr.dtype not in _CODES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        encoded = name.encode()
        blob += struct.pack("<H", len(encoded)) + encoded
        blob += struct.pack("<BB", _CODES[arr.dtype], arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    digest = hashlib.blake2b(bytes(blob), digest_size=16).digest()
    Path(path).write_bytes(bytes(blob) + digest)
    return digest.hex()


def load_checkpoint(path: str | Path) -> tuple[Params, dict]:
    """Read params and metadata; verifies magic, version, and digest."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 + 12:
        raise CheckpointError(f"{path}: truncated checkpoint")
    body, digest = raw[:-16], raw[-16:]
    if hashlib.blake2b(body, digest_size=16).digest() != digest:
        raise CheckpointError(f"{path}: content hash mismatch (corrupted)")
    off = 0
    if body[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    off = 4
    (version,) = struct.unpack_from("<I", body, off)
    off += 4
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (meta_len,) = struct.unpack_from("<I", body, off)
    off += 4
    meta = json.loads(body[off:off + meta_len].decode())
    off += meta_len
    (count,) = struct.unpack_from("<I", body, off)
    off += 4
    params: Params = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off:off + name_len].decode()
        off += name_len
        dtype_code, ndim = struct.unpack_from("<BB", body, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", body, off)
        off += 4 * ndim
        dtype = np.dtype(_DTYPES[dtype_code])
        n_bytes = int(np.prod(shape)) * dtype.itemsize if ndim else dtype.itemsize
        arr = np.frombuffer(body[off:off + n_bytes], dtype=dtype).reshape(shape)
        off += n_bytes
        params[name] = arr.copy()  # own the memory; buffer slices are read-only
    return params, meta


def checkpoint_hash(path: str | Path) -> str:
    """Content hash of an existing checkpoint (the stored digest)."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise CheckpointError(f"{path}: truncated checkpoint")
    body, digest = raw[:-16], raw[-16:]
    if hashlib.blake2b(body, digest_size=16).digest() != digest:
        raise CheckpointError(f"{path}: content hash mismatch (corrupted)")
    return digest.hex()
