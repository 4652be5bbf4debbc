"""Binary field snapshots and CSV series output.

Snapshot layout (little endian):
  bytes  0..15   magic: b"BSNQFLD1" padded with 8 NUL bytes
  bytes 16..23   Nx as uint64
  bytes 24..31   Nz as uint64
  bytes 32..39   Lx as float64
  bytes 40..47   h  as float64
  bytes 48..     Nx * Nz float64 samples, x-major (row i is the z column at x_i)
"""

import struct

import numpy as np

from .errors import SnapshotFormatError
from .grid import Grid, ScalarField

MAGIC = b"BSNQFLD1" + b"\x00" * 8
_HEADER = struct.Struct("<QQdd")


def write_field(path, field):
    """Write a ScalarField snapshot."""
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(g.Nx, g.Nz, g.Lx, g.h))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"))


def read_field(path, grid=None):
    """Read a snapshot; if grid is given, the header must match it."""
    with open(path, "rb") as fh:
        magic = fh.read(16)
        if magic != MAGIC:
            raise SnapshotFormatError("bad magic in %s" % path)
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise SnapshotFormatError("truncated header in %s" % path)
        Nx, Nz, Lx, h = _HEADER.unpack(header)
        payload = fh.read()
    expected = Nx * Nz * 8
    if len(payload) != expected:
        raise SnapshotFormatError(
            "payload of %s has %d bytes, expected %d" % (path, len(payload), expected)
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(Nx, Nz)
    g = Grid(Lx, h, Nx, Nz)
    if grid is not None and grid != g:
        raise SnapshotFormatError(
            "snapshot grid %r does not match expected %r" % (g, grid)
        )
    return ScalarField(g, values.astype(np.float64))


def write_series_csv(path, columns):
    """Write a CSV of named columns (dict name -> sequence), deterministically.

    Floats are rendered with repr (shortest round-trip form), so identical
    runs produce byte-identical files.
    """
    names = list(columns.keys())
    arrays = [list(columns[n]) for n in names]
    nrows = len(arrays[0]) if arrays else 0
    for n, a in zip(names, arrays):
        if len(a) != nrows:
            raise ValueError("column %s has %d rows, expected %d" % (n, len(a), nrows))
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for r in range(nrows):
            fh.write(",".join(_render(a[r]) for a in arrays) + "\n")


def _render(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_series_csv(path):
    """Read a CSV written by write_series_csv back into dict of float arrays."""
    with open(path, "r") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise SnapshotFormatError("empty series file %s" % path)
    names = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(names):
            raise SnapshotFormatError("ragged row in %s" % path)
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise SnapshotFormatError("non-numeric cell in %s: %s" % (path, exc))
    data = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(names)))
    return {n: data[:, i] for i, n in enumerate(names)}
