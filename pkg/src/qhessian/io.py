"""Binary field files and JSON sidecars.

A field file is a 20-byte little-endian header ``<4sIIII`` holding the
magic ``b"QHT1"``, ``n``, ``N``, the scheme code and the number of
components per grid point, followed by float64 values in C order
(grid axes first, then components).  A JSON sidecar with the same stem
repeats the header in readable form.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .torus import SCHEMES, ScalarField, TorusGrid

MAGIC = b"QHT1"
HEADER = struct.Struct("<4sIIII")
SCHEMA_VERSION = 1


def write_field(path, field, extra=None):
    """Write a ScalarField (or any per-point array field) plus its sidecar."""
    path = Path(path)
    grid = field.grid
    values = np.ascontiguousarray(field.values, dtype="<f8")
    ncomp = int(np.prod(values.shape[grid.dim:], dtype=int))
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, grid.n, grid.N, SCHEMES.index(grid.scheme), ncomp))
        fh.write(values.tobytes(order="C"))
    meta = {
        "schema_version": SCHEMA_VERSION,
        "n": grid.n,
        "N": grid.N,
        "scheme": grid.scheme,
        "components": ncomp,
        "dtype": "float64-le",
    }
    if extra:
        meta.update(extra)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def _read(path, grid):
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, n, N, code, ncomp = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if code >= len(SCHEMES):
        raise ValueError(f"{path}: unknown scheme code {code}")
    if grid is not None and (grid.n, grid.N) != (n, N):
        raise ValueError(f"{path}: field is for n={n}, N={N}, expected n={grid.n}, N={grid.N}")
    grid = grid or TorusGrid(n, N, SCHEMES[code])
    data = np.frombuffer(raw, dtype="<f8", offset=HEADER.size)
    if data.size != grid.npoints * ncomp:
        raise ValueError(f"{path}: expected {grid.npoints * ncomp} values, found {data.size}")
    return grid, data.reshape(grid.shape + (ncomp,)).astype(float)


def read_array(path, grid=None):
    """Read any field file as an array of shape ``grid.shape + (components,)``."""
    return _read(path, grid)[1]


def read_field(path, grid=None):
    """Read a scalar field file; ``grid`` must match the header when given."""
    grid, data = _read(path, grid)
    if data.shape[-1] != 1:
        raise ValueError(f"{path}: {data.shape[-1]}-component fields are not scalar")
    return ScalarField(grid, data[..., 0])
