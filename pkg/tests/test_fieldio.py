import struct

import numpy as np
import pytest

from neflab.errors import FieldFormatError
from neflab.fieldio import dumps_field, loads_field, read_field, write_field
from neflab.torus import Grid, PeriodicField


def test_roundtrip(tmp_path):
    g = Grid(2, 8)
    f = PeriodicField(g, np.random.default_rng(1).normal(size=g.shape))
    path = tmp_path / "f.neff"
    write_field(path, f)
    back = read_field(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)


def test_layout():
    g = Grid(1, 8)
    vals = np.arange(64, dtype=float).reshape(g.shape)
    data = dumps_field(PeriodicField(g, vals))
    assert data[:4] == b"NEFF"
    assert struct.unpack("<II", data[4:12]) == (1, 8)
    assert np.array_equal(np.frombuffer(data[12:], dtype="<f8"), np.arange(64.0))


@pytest.mark.parametrize("mangle", [
    lambda d: b"XXXX" + d[4:],
    lambda d: d[:-8],
    lambda d: d[:6],
    lambda d: d[:4] + struct.pack("<II", 3, 8) + d[12:],
    lambda d: d[:4] + struct.pack("<II", 1, 12) + d[12:],
])
def test_corrupted(mangle):
    g = Grid(1, 8)
    data = dumps_field(PeriodicField.zeros(g))
    with pytest.raises(FieldFormatError):
        loads_field(mangle(data))


def test_nan_payload_rejected():
    g = Grid(1, 8)
    data = bytearray(dumps_field(PeriodicField.zeros(g)))
    data[12:20] = struct.pack("<d", float("nan"))
    with pytest.raises(FieldFormatError):
        loads_field(bytes(data))
