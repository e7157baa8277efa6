"""Binary field dumps.

Layout: magic ``b"NEFF"``, little-endian u32 ``n``, u32 ``N``, then
``N**(2n)`` little-endian float64 values in row-major (C) order.
"""

import struct

import numpy as np

from .errors import FieldFormatError
from .torus import Grid, PeriodicField

MAGIC = b"NEFF"
_HEADER = struct.Struct("<4sII")


def dumps_field(field):
    g = field.grid
    body = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    return _HEADER.pack(MAGIC, g.n, g.N) + body


def loads_field(data):
    if len(data) < _HEADER.size:
        raise FieldFormatError("truncated header")
    magic, n, N = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}")
    try:
        grid = Grid(n, N)
    except ValueError as exc:
        raise FieldFormatError(str(exc)) from exc
    expected = _HEADER.size + 8 * grid.size
    if len(data) != expected:
        raise FieldFormatError(f"expected {expected} bytes, got {len(data)}")
    vals = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(grid.shape)
    try:
        return PeriodicField(grid, vals.astype(float))
    except ValueError as exc:
        raise FieldFormatError(str(exc)) from exc


def write_field(path, field):
    with open(path, "wb") as fh:
        fh.write(dumps_field(field))


def read_field(path):
    with open(path, "rb") as fh:
        return loads_field(fh.read())
