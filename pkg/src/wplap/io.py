"""Readers and writers for weight, domain and datum specifications and run outputs.

Every CSV written here starts with ``#`` comment lines carrying the config
hash, seed and package version; JSON documents carry the same data under
``"provenance"``.
"""

import csv
import hashlib
import io
import json
from importlib import metadata
from pathlib import Path

import numpy as np

from .analysis import corner_exact, random_datum
from .errors import ArtifactIOError, ConfigError
from .geometry import corner_domain, half_plane_domain, polygon_domain, rectangle_domain
from .matrixweight import (ConstantField, GridField, PowerField, RandomSmoothField,
                           RotatedAnisotropicField)
from .mesh import Mesh, mesh_generate
from .solver import DiscreteVectorField


def version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(config, seed):
    return {"config_hash": config_hash(config), "seed": seed, "version": version()}


def read_text(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc.strerror or exc}") from exc


def load_json(source):
    """Parse a JSON document from a dict, a JSON string or a file path."""
    if isinstance(source, dict):
        return source
    text = read_text(source)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {source}: {exc}") from exc


def _need(spec, key, kind):
    try:
        return spec[key]
    except (KeyError, TypeError):
        raise ConfigError(f"{kind} spec needs '{key}'") from None


def load_grid_field_csv(path):
    return parse_grid_field_csv(read_text(path))


def parse_grid_field_csv(text):
    """Matrix field from CSV rows ``x, y, m11, m12, m22`` on a rectilinear grid."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"non-numeric entry in grid field CSV: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 5:
        raise ConfigError("grid field CSV needs five columns: x, y, m11, m12, m22")
    xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
    if len(xs) * len(ys) != len(data):
        raise ConfigError("grid field CSV rows do not form a full rectilinear grid")
    order = np.lexsort((data[:, 1], data[:, 0]))
    d = data[order]
    return GridField(xs, ys, d[:, 2], d[:, 3], d[:, 4])


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def load_weight(spec):
    """Matrix weight from a spec such as ``{"family": "power", "exponent": 0.3, "anchor": [0, 0]}``."""
    spec = load_json(spec)
    family = _need(spec, "family", "weight")
    if family == "constant":
        w = ConstantField(spec.get("matrix", np.eye(2)))
    elif family == "identity":
        w = ConstantField(np.eye(2))
    elif family == "power":
        w = PowerField(float(_need(spec, "exponent", "power weight")),
                       spec.get("anchor", (0.0, 0.0)), spec.get("base"))
    elif family == "rotated-anisotropic":
        w = RotatedAnisotropicField(float(_need(spec, "ratio", "anisotropic weight")),
                                    float(spec.get("angle", 0.0)), float(spec.get("twist", 0.0)))
    elif family == "random-smooth":
        w = RandomSmoothField(int(spec.get("seed", 0)), float(spec.get("amplitude", 0.5)),
                              int(spec.get("modes", 3)), float(spec.get("max_frequency", 3.0)))
    elif family in ("grid", "user-supplied"):
        w = load_grid_field_csv(_need(spec, "csv", "grid weight"))
    else:
        raise ConfigError(f"unknown weight family {family!r}")
    if "lambda" in spec:
        lam = float(spec["lambda"])
        if lam < w.lambda_bound * (1 - 1e-9):
            raise ConfigError(f"declared lambda {lam} is below the field's condition bound "
                              f"{w.lambda_bound}")
        w.lambda_bound = lam
    return w


def load_domain(spec):
    spec = load_json(spec)
    kind = _need(spec, "type", "domain")
    if kind == "corner":
        return corner_domain(float(_need(spec, "epsilon", "corner domain")),
                             int(spec.get("chords", 256)))
    if kind == "rectangle":
        return rectangle_domain(*map(float, spec.get("box", (0.0, 1.0, 0.0, 1.0))))
    if kind == "square":
        return rectangle_domain()
    if kind == "half-plane":
        return half_plane_domain(float(spec.get("L", 1.0)))
    if kind == "polygon":
        return polygon_domain(_need(spec, "vertices", "polygon"), spec.get("edge_kinds"))
    raise ConfigError(f"unknown domain type {kind!r}")


def load_mesh(spec):
    """Mesh from a file path or from ``{"domain": ..., "h": ..., "grading": ...}``."""
    if isinstance(spec, (str, Path)):
        return Mesh.from_text(read_text(spec))
    dom = load_domain(_need(spec, "domain", "mesh"))
    anchor = spec.get("anchor")
    if anchor is None and dom.anchors:
        anchor = dom.anchors[0]
    return mesh_generate(dom, float(_need(spec, "h", "mesh")), spec.get("grading"), anchor)


def _bubble_gradient(x):
    x1, x2 = x[:, 0], x[:, 1]
    return np.stack([(1 - 2 * x1) * x2 * (1 - x2), (1 - 2 * x2) * x1 * (1 - x1)], axis=1)


def load_datum(spec, mesh, seed=0):
    """Per-element datum ``F`` from a closed-form tag or a per-element CSV.

    Tags: ``zero``, ``constant`` (``value``), ``random`` (``seed``, ``modes``,
    ``max_frequency``), ``bubble`` (gradient of ``x1 x2 (1-x1)(1-x2)``) and
    ``corner`` (gradient of the corner solution, ``epsilon``). A CSV has rows
    ``element_id, f1, f2``.
    """
    spec = load_json(spec) if not isinstance(spec, dict) else spec
    if "csv" in spec:
        text = read_text(spec["csv"])
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if rows and not _is_number(rows[0][0]):
            rows = rows[1:]
        vec = np.zeros((mesh.n_triangles, 2))
        seen = np.zeros(mesh.n_triangles, bool)
        try:
            for r in rows:
                k = int(r[0])
                if k < 0:
                    raise IndexError(f"negative element id {k}")
                vec[k] = float(r[1]), float(r[2])
                seen[k] = True
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"malformed datum CSV: {exc}") from exc
        if not seen.all():
            raise ConfigError("datum CSV must give a vector for every element")
        return DiscreteVectorField(mesh, vec)
    tag = _need(spec, "type", "datum")
    if tag == "zero":
        return DiscreteVectorField(mesh, np.zeros((mesh.n_triangles, 2)))
    if tag == "constant":
        v = np.asarray(spec.get("value", (1.0, 0.0)), float)
        return DiscreteVectorField(mesh, np.tile(v, (mesh.n_triangles, 1)))
    if tag == "random":
        f = random_datum(int(spec.get("seed", seed)), int(spec.get("modes", 6)),
                         float(spec.get("max_frequency", 6.0)))
        return DiscreteVectorField.from_function(mesh, f)
    if tag == "bubble":
        return DiscreteVectorField.from_function(mesh, _bubble_gradient)
    if tag == "corner":
        return DiscreteVectorField.from_function(
            mesh, corner_exact(float(_need(spec, "epsilon", "corner datum"))).grad)
    raise ConfigError(f"unknown datum type {tag!r}")


def csv_text(rows, fieldnames, prov=None):
    buf = io.StringIO()
    if prov:
        for k, v in prov.items():
            buf.write(f"# {k}={v}\n")
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in fieldnames})
    return buf.getvalue()


def read_csv_rows(text):
    """Parse CSV text written by :func:`csv_text`, skipping comment lines."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def json_text(doc, prov=None):
    if prov is not None:
        doc = {"provenance": prov, **doc}
    return json.dumps(doc, indent=1, sort_keys=False, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write(path, text):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return Path(path)


def nodal_csv(u, prov=None):
    """Rows ``node_id value`` for a scalar field (space separated)."""
    head = "".join(f"# {k}={v}\n" for k, v in (prov or {}).items())
    body = "".join(f"{i} {v!r}\n" for i, v in enumerate(np.asarray(u.values, float).tolist()))
    return head + "node_id value\n" + body


def element_csv(vectors, prov=None):
    rows = [{"element_id": i, "g1": repr(a), "g2": repr(b)}
            for i, (a, b) in enumerate(np.asarray(vectors, float).tolist())]
    return csv_text(rows, ["element_id", "g1", "g2"], prov)
