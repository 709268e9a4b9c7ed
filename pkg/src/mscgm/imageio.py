"""PNG (8/16-bit gray/RGB) and binary PGM reading and writing.

A small codec on top of ``zlib`` because 16-bit RGB PNGs must round-trip
without losing precision.  Interlaced and palette PNGs are rejected.
"""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from . import _kernels
from .errors import FormatError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_CHANNELS = {0: 1, 2: 3, 4: 2, 6: 4}


def _chunks(data: bytes):
    pos = len(PNG_SIGNATURE)
    while pos < len(data):
        if pos + 8 > len(data):
            raise FormatError("truncated PNG chunk header", pos)
        length, ctype = struct.unpack(">I4s", data[pos:pos + 8])
        end = pos + 12 + length
        if end > len(data):
            raise FormatError(f"truncated PNG chunk {ctype!r}", pos)
        body = data[pos + 8:pos + 8 + length]
        (crc,) = struct.unpack(">I", data[pos + 8 + length:end])
        if zlib.crc32(ctype + body) & 0xFFFFFFFF != crc:
            raise FormatError(f"CRC mismatch in PNG chunk {ctype!r}", pos)
        yield ctype, body, pos
        pos = end


def decode_png(data: bytes):
    """Return ``(array, maxval)``; array is uint8/uint16, (H, W) or (H, W, 3)."""
    if not data.startswith(PNG_SIGNATURE):
        raise FormatError("not a PNG file (bad signature)", 0)
    header, idat = None, []
    for ctype, body, pos in _chunks(data):
        if ctype == b"IHDR":
            header = struct.unpack(">IIBBBBB", body)
        elif ctype == b"IDAT":
            idat.append(body)
        elif ctype == b"IEND":
            break
    if header is None:
        raise FormatError("PNG lacks an IHDR chunk", 8)
    width, height, depth, ctype, _, _, interlace = header
    if ctype not in _CHANNELS:
        raise FormatError(f"unsupported PNG colour type {ctype} (palette images are not supported)")
    if depth not in (8, 16):
        raise FormatError(f"unsupported PNG bit depth {depth}")
    if interlace:
        raise FormatError("interlaced PNGs are not supported")
    nch = _CHANNELS[ctype]
    bpp = nch * depth // 8
    stride = width * bpp
    try:
        raw = np.frombuffer(zlib.decompress(b"".join(idat)), dtype=np.uint8)
    except zlib.error as exc:
        raise FormatError(f"corrupt PNG image data: {exc}") from None
    try:
        rows = _kernels.png_unfilter(raw, height, stride, bpp)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if depth == 16:
        arr = rows.reshape(height, -1).view(">u2").astype(np.uint16).reshape(height, width, nch)
    else:
        arr = rows.reshape(height, width, nch)
    if nch in (2, 4):
        arr = arr[..., :-1]  # drop alpha
    if arr.shape[-1] == 1:
        arr = arr[..., 0]
    return np.ascontiguousarray(arr), (1 << depth) - 1


def encode_png(arr) -> bytes:
    """Encode uint8/uint16 (H, W) or (H, W, 3) with filter type 0."""
    arr = np.asarray(arr)
    if arr.dtype not in (np.uint8, np.uint16):
        raise FormatError(f"PNG encoding needs uint8/uint16, got {arr.dtype}")
    if arr.ndim == 3 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    if arr.ndim == 2:
        ctype = 0
    elif arr.ndim == 3 and arr.shape[-1] == 3:
        ctype = 2
    else:
        raise FormatError(f"PNG encoding needs (H, W) or (H, W, 3), got {arr.shape}")
    depth = 8 if arr.dtype == np.uint8 else 16
    h, w = arr.shape[:2]
    body = arr.astype(">u2" if depth == 16 else np.uint8).reshape(h, -1).view(np.uint8).reshape(h, -1)
    raw = np.concatenate([np.zeros((h, 1), dtype=np.uint8), body], axis=1).tobytes()

    def chunk(tag, payload):
        return (struct.pack(">I", len(payload)) + tag + payload
                + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))

    ihdr = struct.pack(">IIBBBBB", w, h, depth, ctype, 0, 0, 0)
    return PNG_SIGNATURE + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw, 6)) + chunk(b"IEND", b"")


def decode_pgm(data: bytes):
    """Binary (P5) PGM -> ``(array, maxval)``."""
    if not data.startswith(b"P5"):
        raise FormatError("not a binary PGM (expected magic 'P5')", 0)
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed PGM header", start)
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace before the raster
    width, height, maxval = fields
    if not 0 < maxval < 65536:
        raise FormatError(f"PGM maxval {maxval} out of range")
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    need = width * height * dtype.itemsize
    if len(data) - pos < need:
        raise FormatError(f"PGM raster truncated: need {need} bytes", pos)
    arr = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos).reshape(height, width)
    return arr.astype(np.uint16 if maxval >= 256 else np.uint8), maxval


def encode_pgm(arr, maxval=None) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise FormatError("PGM holds a single channel")
    if maxval is None:
        maxval = 255 if arr.dtype == np.uint8 else 65535
    body = arr.astype(np.uint8 if maxval < 256 else ">u2").tobytes()
    return f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode() + body


def read_raw(path):
    """Decode a PNG or PGM file -> ``(integer array, maxval)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data.startswith(PNG_SIGNATURE):
        return decode_png(data)
    if data.startswith(b"P5"):
        return decode_pgm(data)
    raise FormatError(f"{os.fspath(path)}: unrecognized image format (expected PNG or binary PGM)", 0)


def read_image(path) -> np.ndarray:
    """Read as float64 (H, W, C) normalized to [-1, 1]."""
    arr, maxval = read_raw(path)
    x = arr.astype(np.float64) / maxval * 2.0 - 1.0
    return x[..., None] if x.ndim == 2 else x


def to_uint16(x) -> np.ndarray:
    """Map [-1, 1] floats to the full 16-bit range (clipping first)."""
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    return np.round((x + 1.0) * 0.5 * 65535.0).astype(np.uint16)


def write_image(path, x, bits=16):
    """Write a [-1, 1] float image as PNG (or PGM for a ``.pgm`` suffix)."""
    x = np.asarray(x)
    if x.ndim == 3 and x.shape[-1] == 1:
        x = x[..., 0]
    if bits == 16:
        arr = to_uint16(x)
    else:
        arr = np.round((np.clip(x, -1, 1) + 1.0) * 0.5 * 255.0).astype(np.uint8)
    data = encode_pgm(arr) if os.fspath(path).lower().endswith(".pgm") else encode_png(arr)
    with open(path, "wb") as fh:
        fh.write(data)
