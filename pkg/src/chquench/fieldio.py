"""Flat binary snapshots: one text header line, then little-endian float64 payload.

Header example::

    shape=16,9 name=rho time_index=3
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


def write_field(path, array, name: str, time_index: int = -1) -> Path:
    a = np.ascontiguousarray(array, dtype="<f8")
    if " " in name or "=" in name:
        raise ValueError(f"field name {name!r} may not contain spaces or '='")
    header = f"shape={','.join(map(str, a.shape))} name={name} time_index={int(time_index)}\n"
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(a.tobytes(order="C"))
    return path


def read_field(path):
    """Return ``(array, name, time_index)``; the payload length must match the header shape."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        payload = fh.read()
    meta = dict(item.split("=", 1) for item in header)
    shape = tuple(int(s) for s in meta["shape"].split(",") if s)
    n = int(np.prod(shape)) if shape else 1
    if len(payload) != 8 * n:
        raise ValueError(f"{path}: header shape {shape} needs {8 * n} bytes, "
                         f"payload has {len(payload)}")
    a = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(float)
    return a, meta["name"], int(meta["time_index"])
