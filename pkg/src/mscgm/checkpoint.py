"""Binary checkpoint container: named float tensors plus a JSON metadata block.

Layout (little-endian)::

    b"MSCG" | u32 version | u32 count
    count x ( u32 name_len | name | u8 dtype (0=f32, 1=f64) | u8 ndim | u32 dims[ndim] | payload )
    u64 meta_len | UTF-8 JSON metadata
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidArgumentError

MAGIC = b"MSCG"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


@dataclass
class Checkpoint:
    tensors: OrderedDict = field(default_factory=OrderedDict)
    metadata: dict = field(default_factory=dict)

    @property
    def step(self) -> int:
        return int(self.metadata.get("step", 0))


def config_hash(config) -> str:
    """Short stable digest of a JSON-serializable configuration."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def encode(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise InvalidArgumentError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes())
    meta = json.dumps(ckpt.metadata, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<Q", len(meta)) + meta)
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated checkpoint while reading {what}", self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic: not a checkpoint file", 0)
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    (count,) = r.unpack("<I", "tensor count")
    tensors = OrderedDict()
    for _ in range(count):
        start = r.pos
        (nlen,) = r.unpack("<I", "name length")
        try:
            name = r.take(nlen, "tensor name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor name is not UTF-8", start + 4) from None
        code, ndim = r.unpack("<BB", f"header of {name!r}")
        if code not in _DTYPES:
            raise FormatError(f"tensor {name!r}: unknown dtype code {code}", r.pos - 2)
        dims = r.unpack(f"<{ndim}I", f"dims of {name!r}")
        dt = _DTYPES[code]
        n = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        payload = r.take(n, f"payload of {name!r}")
        tensors[name] = np.frombuffer(payload, dtype=dt).reshape(dims).astype(dt.newbyteorder("="))
    (mlen,) = r.unpack("<Q", "metadata length")
    start = r.pos
    try:
        meta = json.loads(r.take(mlen, "metadata").decode("utf-8")) if mlen else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt metadata block: {exc}", start) from None
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after metadata", r.pos)
    return Checkpoint(tensors, meta)


def save_checkpoint(ckpt: Checkpoint, path):
    with open(path, "wb") as fh:
        fh.write(encode(ckpt))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode(fh.read())
