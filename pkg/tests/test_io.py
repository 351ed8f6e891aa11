import json

import numpy as np
import pytest

from qhessian import io
from qhessian.torus import ScalarField, TorusGrid


def test_roundtrip_and_sidecar(tmp_path, rng):
    g = TorusGrid(1, 4, "spectral")
    f = ScalarField(g, rng.standard_normal(g.shape))
    path = io.write_field(tmp_path / "phi.qht", f, extra={"b": 1.5})
    back = io.read_field(path)
    assert back.grid.scheme == "spectral" and back.grid.N == 4
    assert np.array_equal(back.values, f.values)
    meta = json.loads((tmp_path / "phi.json").read_text())
    assert meta["components"] == 1 and meta["b"] == 1.5 and meta["schema_version"] == io.SCHEMA_VERSION
    raw = path.read_bytes()
    assert raw[:4] == b"QHT1" and len(raw) == io.HEADER.size + 8 * g.npoints


def test_rejects_corrupt_files(tmp_path):
    g = TorusGrid(1, 4)
    path = io.write_field(tmp_path / "f.qht", ScalarField(g, 1.0))
    raw = path.read_bytes()
    (tmp_path / "magic.qht").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short.qht").write_bytes(raw[:-8])
    (tmp_path / "header.qht").write_bytes(raw[:7])
    for name in ("magic", "short", "header"):
        with pytest.raises(ValueError):
            io.read_field(tmp_path / f"{name}.qht")
    with pytest.raises(ValueError):
        io.read_field(path, TorusGrid(1, 6))
