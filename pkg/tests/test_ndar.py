"""Binary .arr container format tests."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from som_multipath.ndar import NdarFormatError, decode, encode, read, write


def test_header_layout():
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    data = encode(arr)
    assert data[:4] == b"NDAR"
    version, dtype_code, ndim = struct.unpack_from("<BBB", data, 4)
    assert (version, dtype_code, ndim) == (1, 0, 2)
    assert struct.unpack_from("<2I", data, 7) == (2, 3)
    assert len(data) == 7 + 8 + 6 * 4


def test_roundtrip_exact():
    rng = np.random.default_rng(0)
    for shape in ((5,), (3, 4), (2, 3, 4), (0, 4)):
        arr = rng.normal(size=shape).astype(np.float32)
        back = decode(encode(arr))
        assert back.dtype == np.float32
        assert back.shape == arr.shape
        assert np.array_equal(back, arr)
    # 0-d input is promoted to 1-d by the contiguous conversion
    assert decode(encode(np.array(2.5, dtype=np.float32))).shape == (1,)


def test_file_roundtrip(tmp_path):
    arr = np.linspace(0, 1, 7, dtype=np.float32)
    path = tmp_path / "x.arr"
    write(path, arr)
    assert np.array_equal(read(path), arr)


def test_rejects_garbage():
    with pytest.raises(NdarFormatError):
        decode(b"NOPE" + b"\x00" * 10)
    good = encode(np.zeros(3, dtype=np.float32))
    with pytest.raises(NdarFormatError):
        decode(good[:-1])  # truncated payload
    with pytest.raises(NdarFormatError):
        decode(good + b"\x00")  # trailing junk
    bad_version = bytearray(good)
    bad_version[4] = 9
    with pytest.raises(NdarFormatError):
        decode(bytes(bad_version))


def test_non_float_input_converted():
    arr = np.arange(4, dtype=np.int64)
    back = decode(encode(arr))
    assert back.dtype == np.float32
    assert np.array_equal(back, arr.astype(np.float32))
