"""Binary checkpoint format.

Layout (little-endian)::

    b"ASGK" | u32 version | u32 record count
    per record: u32 name length | UTF-8 name | u32 rank | u64 dims[rank] | f64 values
    u64 config length | UTF-8 JSON config
    u64 checksum (blake2b, 8-byte digest, over everything after the version field)
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ASGK"
VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def _checksum(payload):
    return struct.unpack("<Q", hashlib.blake2b(payload, digest_size=8).digest())[0]


def dumps(arrays, config=None):
    parts = [struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8").copy(order="C")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    cfg = json.dumps(config or {}, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<Q", len(cfg)))
    parts.append(cfg)
    payload = b"".join(parts)
    return MAGIC + struct.pack("<I", VERSION) + payload + struct.pack("<Q", _checksum(payload))


def loads(blob):
    if blob[:4] != MAGIC:
        raise CheckpointError("not an ASGK checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version} (expected {VERSION})")
    payload, tail = blob[8:-8], blob[-8:]
    if len(blob) < 20 or struct.unpack("<Q", tail)[0] != _checksum(payload):
        raise CheckpointError("checkpoint checksum mismatch")
    pos = 0
    (count,) = struct.unpack_from("<I", payload, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        name = payload[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", payload, pos)
        pos += 8 * rank
        n = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(payload, dtype="<f8", count=n, offset=pos).reshape(dims).astype(np.float64)
        pos += 8 * n
    (clen,) = struct.unpack_from("<Q", payload, pos)
    pos += 8
    config = json.loads(payload[pos:pos + clen].decode("utf-8"))
    return arrays, config


def save(path, arrays, config=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(arrays, config))
    tmp.replace(path)


def load(path):
    return loads(Path(path).read_bytes())
