"""Flat binary container for clip tensors ("RTEN" files).

Wire format, fixed 23-byte header followed by the payload:

    bytes 0..3   magic ``RTEN``
    byte  4      format version, currently 1
    byte  5      dtype code: 0 = uint8, 1 = float32
    byte  6      layout code: 0 = TCHW, 1 = CTHW
    bytes 7..22  four little-endian uint32 dims, always ordered T, C, H, W
                 regardless of layout
    bytes 23..   payload in declared layout order; float32 stored
                 little-endian
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .tensor import FrameTensor, Layout

MAGIC = b"RTEN"
VERSION = 1
HEADER_SIZE = 23

_DTYPE_CODES = {np.dtype(np.uint8): 0, np.dtype(np.float32): 1}
_DTYPE_BY_CODE = {0: np.dtype("u1"), 1: np.dtype("<f4")}
_LAYOUT_CODES = {Layout.TCHW: 0, Layout.CTHW: 1}
_LAYOUT_BY_CODE = {0: Layout.TCHW, 1: Layout.CTHW}


def tensor_to_bytes(tensor: FrameTensor) -> bytes:
    header = MAGIC + bytes(
        [VERSION, _DTYPE_CODES[tensor.dtype], _LAYOUT_CODES[tensor.layout]]
    )
    header += struct.pack("<4I", *tensor.dims)
    wire_dtype = _DTYPE_BY_CODE[_DTYPE_CODES[tensor.dtype]]
    return header + tensor.data.astype(wire_dtype, copy=False).tobytes()


def tensor_from_bytes(buf: bytes, source: str = "<bytes>") -> FrameTensor:
    if len(buf) < HEADER_SIZE:
        raise ValidationError(f"{source}: truncated header ({len(buf)} bytes)")
    if buf[:4] != MAGIC:
        raise ValidationError(f"{source}: bad magic {buf[:4]!r}")
    version, dtype_code, layout_code = buf[4], buf[5], buf[6]
    if version != VERSION:
        raise ValidationError(f"{source}: unsupported version {version}")
    if dtype_code not in _DTYPE_BY_CODE:
        raise ValidationError(f"{source}: unknown dtype code {dtype_code}")
    if layout_code not in _LAYOUT_BY_CODE:
        raise ValidationError(f"{source}: unknown layout code {layout_code}")
    dims = struct.unpack("<4I", buf[7:HEADER_SIZE])
    if min(dims) < 1:
        raise ValidationError(f"{source}: non-positive dims {dims}")
    dtype = _DTYPE_BY_CODE[dtype_code]
    layout = _LAYOUT_BY_CODE[layout_code]
    count = dims[0] * dims[1] * dims[2] * dims[3]
    expected = HEADER_SIZE + count * dtype.itemsize
    if len(buf) != expected:
        raise ValidationError(
            f"{source}: payload size mismatch, expected {expected} bytes total, "
            f"got {len(buf)}"
        )
    flat = np.frombuffer(buf, dtype=dtype, count=count, offset=HEADER_SIZE)
    # copy: frombuffer views are read-only and may outlive the source bytes
    flat = flat.astype(flat.dtype.newbyteorder("="), copy=True)
    return FrameTensor.from_payload(flat, dims, flat.dtype, layout)


def write_rten(tensor: FrameTensor, path) -> int:
    """Serialize ``tensor`` to ``path``; returns bytes written."""
    data = tensor_to_bytes(tensor)
    Path(path).write_bytes(data)
    return len(data)


def read_rten(path) -> FrameTensor:
    """Load and validate a tensor file; raises ValidationError on corrupt input."""
    path = Path(path)
    return tensor_from_bytes(path.read_bytes(), source=str(path))
