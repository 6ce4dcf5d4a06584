"""Flat named-vector text format for parameter sets.

One record per parameter, three lines each::

    name
    shape d0 d1 ...
    v0 v1 v2 ...

Values are written with ``repr`` so a round trip is bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def dumps(params):
    lines = []
    for name, value in params.items():
        arr = np.asarray(value.data if hasattr(value, "data") else value, dtype=np.float64)
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"parameter name {name!r} must be non-empty without whitespace")
        lines.append(name)
        lines.append(" ".join(["shape"] + [str(d) for d in arr.shape]))
        lines.append(" ".join(repr(float(v)) for v in arr.ravel()))
    return "\n".join(lines) + "\n"


def loads(text):
    lines = text.rstrip("\n").split("\n")
    if len(lines) % 3:
        raise ValueError("parameter file is truncated (records are 3 lines each)")
    params = {}
    for i in range(0, len(lines), 3):
        name, shape_line, values_line = lines[i:i + 3]
        head, *dims = shape_line.split()
        if head != "shape":
            raise ValueError(f"record {name!r}: expected a shape line, got {shape_line!r}")
        shape = tuple(int(d) for d in dims)
        values = np.array([float(v) for v in values_line.split()], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ValueError(f"record {name!r}: {values.size} values for shape {shape}")
        if name in params:
            raise ValueError(f"duplicate parameter {name!r}")
        params[name] = values.reshape(shape)
    return params


def save_params(params, path):
    Path(path).write_text(dumps(params))


def load_params(path):
    return loads(Path(path).read_text())
