"""Binary tensor and image formats.

Tensor files ("HPT1"): magic bytes ``HPT1``, one u8 dimension count, that
many u32 little-endian extents, then the row-major float32 little-endian
payload.  Write/read round-trips are bit-exact on every platform.

Images are binary PPM ("P6") with maxval 255.  Channel values map
``byte / 255.0`` on read; on write ``round(v * 255)`` with halves rounded
away from zero, clamped to ``[0, 255]``.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import ContractError, FormatError
from .types import MAX_TENSOR_ELEMS, TensorF32

HPT_MAGIC = b"HPT1"
_MAX_NDIM = 255


def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    data = source.read(n)
    if data is None or len(data) != n:
        got = 0 if data is None else len(data)
        raise FormatError(f"truncated stream: expected {n} bytes of {what}, got {got}")
    return data


def write_tensor(t: TensorF32, sink: BinaryIO) -> int:
    """Serialize a tensor; returns the number of bytes written."""
    t.validate()
    ndim = len(t.dims)
    if ndim > _MAX_NDIM:
        raise ContractError(f"tensor rank {ndim} exceeds format limit {_MAX_NDIM}")
    header = HPT_MAGIC + struct.pack("<B", ndim)
    header += struct.pack(f"<{ndim}I", *t.dims)
    payload = np.ascontiguousarray(t.array, dtype="<f4").tobytes()
    sink.write(header)
    sink.write(payload)
    return len(header) + len(payload)


def read_tensor(source: BinaryIO) -> TensorF32:
    """Read one tensor record; raises FormatError on any malformation."""
    magic = _read_exact(source, 4, "magic")
    if magic != HPT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {HPT_MAGIC!r}")
    (ndim,) = struct.unpack("<B", _read_exact(source, 1, "rank"))
    dims = struct.unpack(f"<{ndim}I", _read_exact(source, 4 * ndim, "dims"))
    n_elems = 1
    for d in dims:
        n_elems *= d
    if n_elems > MAX_TENSOR_ELEMS:
        raise FormatError(f"dim product {n_elems} overflows u64")
    payload = _read_exact(source, 4 * n_elems, "payload")
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
    return TensorF32(np.ascontiguousarray(arr))


def write_ppm(image: TensorF32, sink: BinaryIO) -> int:
    """Write an [H, W, 3] image in [0, 1] as binary PPM; returns bytes written."""
    dims = image.dims
    if len(dims) != 3 or dims[2] != 3:
        raise ContractError(f"PPM image must be [H, W, 3], got {dims}")
    h, w = dims[0], dims[1]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    # round half away from zero; values are non-negative so floor(v*255 + 0.5)
    quantized = np.floor(image.array * 255.0 + 0.5)
    payload = np.clip(quantized, 0, 255).astype(np.uint8).tobytes()
    sink.write(header)
    sink.write(payload)
    return len(header) + len(payload)


def _next_token(source: BinaryIO) -> bytes:
    """Read one whitespace-delimited PPM header token, skipping # comments."""
    token = b""
    while True:
        c = source.read(1)
        if not c:
            if token:
                return token
            raise FormatError("truncated PPM header")
        if c == b"#" and not token:
            while c and c not in b"\r\n":
                c = source.read(1)
            continue
        if c.isspace():
            if token:
                return token
            continue
        token += c


def read_ppm(source: BinaryIO) -> TensorF32:
    """Read a binary PPM with maxval 255 into an [H, W, 3] tensor in [0, 1]."""
    magic = _read_exact(source, 2, "PPM magic")
    if magic != b"P6":
        raise FormatError(f"bad PPM magic {magic!r}, expected b'P6'")
    try:
        w = int(_next_token(source))
        h = int(_next_token(source))
        maxval = int(_next_token(source))
    except ValueError as exc:
        raise FormatError(f"non-numeric PPM header token: {exc}") from exc
    if w < 1 or h < 1:
        raise FormatError(f"bad PPM extents {w}x{h}")
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval} (only 255)")
    payload = _read_exact(source, h * w * 3, "PPM payload")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return TensorF32.from_array(arr.astype(np.float32) / 255.0)
