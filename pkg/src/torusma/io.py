"""Binary field container, CSV helpers and float64-faithful JSON.

Container layout (little-endian): ``int64 n``, ``int64 m``, ``float64 period``,
then ``m**(2n)`` float64 node values in row-major order.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import struct
from pathlib import Path

import numpy as np

from .field import GridSpec, PeriodicField

_HEADER = struct.Struct("<qqd")


def field_to_bytes(obj) -> bytes:
    grid = obj.grid
    head = _HEADER.pack(grid.n, grid.m, grid.period)
    return head + np.ascontiguousarray(obj.values, dtype="<f8").tobytes()


def field_from_bytes(data: bytes, cls=PeriodicField):
    n, m, period = _HEADER.unpack_from(data, 0)
    grid = GridSpec(n, m, period)
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != grid.size:
        raise ValueError(f"container body has {body.size} values, expected {grid.size}")
    return cls(grid, body.reshape(grid.shape).astype(float))


def write_field(path, obj) -> Path:
    path = Path(path)
    path.write_bytes(field_to_bytes(obj))
    return path


def read_field(path, cls=PeriodicField):
    return field_from_bytes(Path(path).read_bytes(), cls)


def field_to_csv(obj, path) -> Path:
    """One row per node: the ``2n`` real coordinates then the value."""
    grid = obj.grid
    path = Path(path)
    coords = grid.coords()
    idx = np.indices(grid.shape).reshape(grid.ndim, -1).T
    vals = obj.values.reshape(-1)
    axes = [f"{c}{j + 1}" for j in range(grid.n) for c in "xy"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(axes + ["value"])
        for row, v in zip(idx, vals):
            w.writerow([fmt_float(coords[i]) for i in row] + [fmt_float(v)])
    return path


# ---------------------------------------------------------------------------

def fmt_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(obj, out):
    if isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(str(k)) + ": ")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(list(obj)):
            if i:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON with every float written at 17 significant digits; keys keep insertion order."""
    out = []
    _encode(obj, out)
    return "".join(out) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def write_table(path, header, rows, delimiter=",") -> Path:
    path = Path(path)
    buf = _io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in r])
    path.write_text(buf.getvalue())
    return path
