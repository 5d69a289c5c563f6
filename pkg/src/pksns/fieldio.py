"""Field serialization: CSV text and a compact binary block.

CSV layout
    line 1: ``# pksns-field v1 nx=<nx> ny=<ny> dealias=<0|1>``
    then ``ny + 1`` rows, one per y-node (top wall first), each with
    ``nx`` comma-separated values, one per x-node.

Binary layout (little endian)
    32-byte header: 8-byte magic ``b"PKSFLD01"``, then ``nx``, ``ny`` and
    ``flags`` as unsigned 64-bit integers (bit 0 = dealias).  The header
    is followed by ``(ny + 1) * nx`` float64 values in row-major order,
    rows being y-nodes exactly as in the CSV layout.
"""

import io
import re
import struct

import numpy as np

from .errors import UsageError
from .grid import ChannelGrid, PhysField

MAGIC = b"PKSFLD01"
_HEADER = struct.Struct("<8sQQQ")
_CSV_HEADER = re.compile(r"#\s*pksns-field v1 nx=(\d+) ny=(\d+) dealias=([01])")


def format_float(v):
    return repr(float(v))


def field_to_csv(field):
    g = field.grid
    out = io.StringIO()
    out.write(f"# pksns-field v1 nx={g.nx} ny={g.ny} dealias={int(g.dealias)}\n")
    for row in field.values.T:
        out.write(",".join(format_float(v) for v in row))
        out.write("\n")
    return out.getvalue()


def field_from_csv(text):
    lines = text.splitlines()
    m = _CSV_HEADER.match(lines[0]) if lines else None
    if m is None:
        raise UsageError("missing pksns-field CSV header")
    grid = ChannelGrid(int(m.group(1)), int(m.group(2)), bool(int(m.group(3))))
    rows = [[float(v) for v in line.split(",")] for line in lines[1:] if line]
    values = np.array(rows, dtype=float).T
    return PhysField(grid, values)


def field_to_bytes(field):
    g = field.grid
    header = _HEADER.pack(MAGIC, g.nx, g.ny, int(g.dealias))
    return header + np.ascontiguousarray(field.values.T, dtype="<f8").tobytes()


def field_from_bytes(blob):
    if len(blob) < _HEADER.size:
        raise UsageError("binary field block shorter than its header")
    magic, nx, ny, flags = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise UsageError(f"bad field magic {magic!r}")
    grid = ChannelGrid(int(nx), int(ny), bool(flags & 1))
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if data.size != nx * (ny + 1):
        raise UsageError("binary field block has the wrong payload size")
    return PhysField(grid, data.reshape(ny + 1, nx).T.astype(float))


def write_field(field, path, fmt="bin"):
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(field_to_csv(field))
    elif fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(field_to_bytes(field))
    else:
        raise UsageError(f"unknown field format {fmt!r}")


def read_field(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob.startswith(MAGIC):
        return field_from_bytes(blob)
    return field_from_csv(blob.decode("utf-8"))
