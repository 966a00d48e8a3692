"""Reader/writer for the ``.arr`` binary array container.

Layout (little-endian throughout):

    bytes 0..3   magic ``NDAR``
    byte  4      format version (1)
    byte  5      dtype code (0 = IEEE float32)
    byte  6      number of dimensions
    next 4*ndim  u32 dims
    rest         row-major payload

Only float32 payloads exist in version 1; callers with other dtypes convert
explicitly before writing.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NDAR"
VERSION = 1
DTYPE_FLOAT32 = 0

_DTYPES = {DTYPE_FLOAT32: np.dtype("<f4")}


class NdarFormatError(ValueError):
    """Raised when a buffer does not parse as a valid ``.arr`` file."""


def encode(array: np.ndarray) -> bytes:
    """Serialize ``array`` (converted to float32) to ``.arr`` bytes."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim > 255:
        raise NdarFormatError(f"too many dimensions: {arr.ndim}")
    for dim in arr.shape:
        if dim > 0xFFFFFFFF:
            raise NdarFormatError(f"dimension too large for u32: {dim}")
    header = MAGIC + struct.pack("<BBB", VERSION, DTYPE_FLOAT32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes(order="C")


def decode(data: bytes) -> np.ndarray:
    """Parse ``.arr`` bytes into a float32 array."""
    if len(data) < 7 or data[:4] != MAGIC:
        raise NdarFormatError("missing NDAR magic")
    version, dtype_code, ndim = struct.unpack_from("<BBB", data, 4)
    if version != VERSION:
        raise NdarFormatError(f"unsupported version {version}")
    if dtype_code not in _DTYPES:
        raise NdarFormatError(f"unknown dtype code {dtype_code}")
    offset = 7
    if len(data) < offset + 4 * ndim:
        raise NdarFormatError("truncated header")
    shape = struct.unpack_from(f"<{ndim}I", data, offset)
    offset += 4 * ndim
    dtype = _DTYPES[dtype_code]
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    expected = offset + count * dtype.itemsize
    if len(data) != expected:
        raise NdarFormatError(f"payload size mismatch: {len(data)} != {expected}")
    flat = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    return flat.reshape(shape).copy()


def write(path: str | Path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode(array))


def read(path: str | Path) -> np.ndarray:
    return decode(Path(path).read_bytes())
