import json

import numpy as np
import pytest

from wplap import io as wio
from wplap.errors import ArtifactIOError, ConfigError
from wplap.matrixweight import ConstantField, GridField, PowerField
from wplap.mesh import unit_square_mesh


def test_config_hash_stable_and_order_free():
    a = wio.config_hash({"b": 1, "a": [1, 2]})
    assert a == wio.config_hash({"a": [1, 2], "b": 1})
    assert len(a) == 16 and a != wio.config_hash({"a": [1, 2], "b": 2})
    prov = wio.provenance({}, 3)
    assert prov["seed"] == 3 and prov["version"] == wio.version()


@pytest.mark.parametrize("spec,cls", [
    ({"family": "identity"}, ConstantField),
    ({"family": "constant", "matrix": [[2, 0], [0, 1]]}, ConstantField),
    ({"family": "power", "exponent": 0.3}, PowerField),
])
def test_load_weight_families(spec, cls):
    assert isinstance(wio.load_weight(spec), cls)


def test_load_weight_errors():
    with pytest.raises(ConfigError):
        wio.load_weight({"family": "mystery"})
    with pytest.raises(ConfigError):
        wio.load_weight({"exponent": 1})
    with pytest.raises(ConfigError):
        wio.load_weight({"family": "constant", "matrix": [[4, 0], [0, 1]], "lambda": 2.0})
    w = wio.load_weight({"family": "rotated-anisotropic", "ratio": 3.0, "lambda": 5.0})
    assert w.lambda_bound == 5.0


def test_grid_field_csv(tmp_path):
    rows = ["x,y,m11,m12,m22"]
    for x in (0.0, 1.0):
        for y in (0.0, 1.0, 2.0):
            rows.append(f"{x},{y},{1 + x},{0.1},{1 + y}")
    p = tmp_path / "w.csv"
    p.write_text("\n".join(rows))
    w = wio.load_weight({"family": "grid", "csv": str(p)})
    assert isinstance(w, GridField)
    assert np.allclose(w([[0.5, 1.0]])[0], [[1.5, 0.1], [0.1, 2.0]])
    with pytest.raises(ConfigError):
        wio.parse_grid_field_csv("\n".join(rows[:-1]))
    with pytest.raises(ConfigError):
        wio.parse_grid_field_csv("0,0,1,0\n")


def test_load_domain_and_mesh():
    assert wio.load_domain({"type": "corner", "epsilon": 0.5}).delta == 0.5
    assert wio.load_domain({"type": "half-plane"}).delta == 0.0
    with pytest.raises(ConfigError):
        wio.load_domain({"type": "torus"})
    m = wio.load_mesh({"domain": {"type": "square"}, "h": 0.5})
    assert m.n_triangles == 8


def test_datum_csv_roundtrip(tmp_path):
    mesh = unit_square_mesh(2)
    v = np.arange(2 * mesh.n_triangles, dtype=float).reshape(-1, 2)
    p = tmp_path / "F.csv"
    p.write_text("element_id,f1,f2\n" + "".join(f"{i},{a},{b}\n" for i, (a, b) in enumerate(v)))
    F = wio.load_datum({"csv": str(p)}, mesh)
    assert np.array_equal(F.vectors, v)
    p.write_text("element_id,f1,f2\n0,1,2\n")
    with pytest.raises(ConfigError):
        wio.load_datum({"csv": str(p)}, mesh)
    p.write_text("element_id,f1,f2\n-1,1,2\n")
    with pytest.raises(ConfigError):
        wio.load_datum({"csv": str(p)}, mesh)
    with pytest.raises(ConfigError):
        wio.load_datum({"type": "sparkles"}, mesh)


def test_io_errors(tmp_path):
    with pytest.raises(ArtifactIOError):
        wio.read_text(tmp_path / "missing.txt")
    bad = tmp_path / "bad.json"
    bad.write_text("[1,")
    with pytest.raises(ConfigError):
        wio.load_json(str(bad))


def test_csv_and_json_writers():
    prov = {"config_hash": "abc", "seed": 1, "version": "0"}
    text = wio.csv_text([{"a": 1, "b": 2}], ["a", "b"], prov)
    assert text.startswith("# config_hash=abc\n")
    assert wio.read_csv_rows(text) == [{"a": "1", "b": "2"}]
    doc = json.loads(wio.json_text({"x": np.float64(1.5), "y": np.arange(2)}, prov))
    assert doc["provenance"]["seed"] == 1 and doc["x"] == 1.5 and doc["y"] == [0, 1]
