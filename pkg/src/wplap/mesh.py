"""Conforming P1 triangulations of polygonal domains.

Structured meshes cover axis-aligned rectangles. General polygons are meshed
with a force-equilibrium point placement (Persson & Strang's DistMesh) on top
of Delaunay triangulations, with all polygon vertices fixed so the mesh
boundary conforms to the polygon.
"""

from dataclasses import dataclass
from math import ceil, pi

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import MeshError, InvalidInputError


@dataclass
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    h: float

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.boundary = np.asarray(self.boundary, dtype=bool)
        # orient counter-clockwise
        neg = self.signed_areas() < 0
        self.triangles[neg] = self.triangles[neg][:, [0, 2, 1]]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.nodes[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self):
        return np.abs(self.signed_areas())

    @property
    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def basis_gradients(self):
        """Gradients of the three hat functions on each element, shape (T, 3, 2)."""
        p = self.nodes[self.triangles]
        x, y = p[..., 0], p[..., 1]
        area2 = 2.0 * self.signed_areas()
        g = np.empty((len(p), 3, 2))
        g[:, 0] = np.stack([y[:, 1] - y[:, 2], x[:, 2] - x[:, 1]], 1)
        g[:, 1] = np.stack([y[:, 2] - y[:, 0], x[:, 0] - x[:, 2]], 1)
        g[:, 2] = np.stack([y[:, 0] - y[:, 1], x[:, 1] - x[:, 0]], 1)
        return g / area2[:, None, None]

    def gradient(self, u):
        """Per-element gradient of the P1 field with nodal values ``u``."""
        return np.einsum("tk,tkd->td", np.asarray(u)[self.triangles], self.basis_gradients())

    def edges(self):
        e = np.sort(self.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def boundary_edges(self):
        e, c = self.edges()
        return e[c == 1]

    def is_conforming(self):
        _, counts = self.edges()
        return bool(np.all(counts <= 2))

    def min_angle(self):
        p = self.nodes[self.triangles]
        angs = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosang = np.sum(a * b, 1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angs.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return float(np.min(angs))

    def locate(self, points):
        """Element index and barycentric coordinates for each point (-1 if outside)."""
        points = np.atleast_2d(np.asarray(points, float))
        p = self.nodes[self.triangles]
        T = np.stack([p[:, 0] - p[:, 2], p[:, 1] - p[:, 2]], axis=2)
        Tinv = np.linalg.inv(T)
        elem = np.full(len(points), -1)
        bary = np.zeros((len(points), 3))
        chunk = max(1, 2_000_000 // max(len(p), 1))
        for s in range(0, len(points), chunk):
            q = points[s:s + chunk]
            lam = np.einsum("tij,qtj->qti", Tinv, q[:, None, :] - p[None, :, 2])
            l3 = 1 - lam.sum(axis=2)
            allb = np.concatenate([lam, l3[..., None]], axis=2)
            ok = np.all(allb >= -1e-12, axis=2)
            has = ok.any(axis=1)
            first = np.argmax(ok, axis=1)
            idx = np.arange(len(q))
            elem[s:s + chunk] = np.where(has, first, -1)
            bary[s:s + chunk] = allb[idx, first]
        return elem, bary

    def interpolate(self, u, points):
        """Evaluate the P1 field ``u`` at ``points`` (NaN outside the mesh)."""
        elem, bary = self.locate(points)
        vals = np.sum(np.asarray(u)[self.triangles[np.maximum(elem, 0)]] * bary, axis=1)
        return np.where(elem >= 0, vals, np.nan)

    def to_text(self):
        lines = [f"{self.n_nodes} {self.n_triangles}"]
        lines += [f"{float(x)!r} {float(y)!r} {int(b)}" for (x, y), b in zip(self.nodes, self.boundary)]
        lines += [f"{i} {j} {k}" for i, j, k in self.triangles]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, h=None):
        rows = [r for r in text.strip().splitlines() if r.strip() and not r.startswith("#")]
        try:
            nn, nt = map(int, rows[0].split())
            nodes = np.array([[float(v) for v in r.split()[:2]] for r in rows[1:1 + nn]])
            flags = np.array([int(r.split()[2]) for r in rows[1:1 + nn]], dtype=bool)
            tris = np.array([[int(v) for v in r.split()] for r in rows[1 + nn:1 + nn + nt]])
        except (ValueError, IndexError) as exc:
            raise MeshError(f"malformed mesh file: {exc}") from exc
        if len(nodes) != nn or len(tris) != nt:
            raise MeshError("mesh file counts do not match its contents")
        mesh = cls(nodes, tris, flags, h if h is not None else 0.0)
        if h is None:
            e, _ = mesh.edges()
            mesh.h = float(np.max(np.linalg.norm(nodes[e[:, 0]] - nodes[e[:, 1]], axis=1)))
        return mesh


def structured_rectangle(x0, x1, y0, y1, nx, ny):
    """Each grid cell split into two triangles along its rising diagonal."""
    xs, ys = np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    tris = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    bnd = (np.isclose(nodes[:, 0], x0) | np.isclose(nodes[:, 0], x1)
           | np.isclose(nodes[:, 1], y0) | np.isclose(nodes[:, 1], y1))
    h = max((x1 - x0) / nx, (y1 - y0) / ny)
    return Mesh(nodes, tris, bnd, h)


def unit_square_mesh(n):
    return structured_rectangle(0.0, 1.0, 0.0, 1.0, n, n)


def disk_mesh(radius=1.0, rings=8, sectors=6):
    """Disk mesh with exact dihedral symmetry of order ``sectors``.

    One half-sector wedge of angle ``pi / sectors`` is filled with a triangular
    lattice, mirrored, and rotated around the origin.
    """
    half = pi / sectors
    pts, tris = [np.zeros(2)], []
    index = {(0, 0): 0}
    for j in range(1, rings + 1):
        for i in range(j + 1):
            ang = half * i / j
            index[(j, i)] = len(pts)
            pts.append(radius * j / rings * np.array([np.cos(ang), np.sin(ang)]))
    for j in range(rings):
        for i in range(j + 1):
            tris.append((index[(j, i)], index[(j + 1, i)], index[(j + 1, i + 1)]))
        for i in range(j):
            tris.append((index[(j, i)], index[(j + 1, i + 1)], index[(j, i + 1)]))
    wedge = np.array(pts)
    wt = np.array(tris)

    all_pts, all_tris = [], []
    offset = 0
    for k in range(sectors):
        for mirror in (False, True):
            p = wedge.copy()
            if mirror:
                p[:, 1] = -p[:, 1]
            c, s = np.cos(2 * half * k), np.sin(2 * half * k)
            p = p @ np.array([[c, s], [-s, c]])
            all_pts.append(p)
            all_tris.append(wt + offset)
            offset += len(p)
    P = np.vstack(all_pts)
    T = np.vstack(all_tris)
    key = np.round(P / (radius * 1e-9)).astype(np.int64)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    nodes = P[first]
    tris = inv.ravel()[T]
    bnd = np.isclose(np.linalg.norm(nodes, axis=1), radius)
    return Mesh(nodes, tris, bnd, radius / rings)


def _fixed_points(domain, anchor):
    pf = [domain.vertices]
    if anchor is not None:
        pf.append(np.atleast_2d(anchor))
    return np.unique(np.vstack(pf), axis=0)


def size_function(domain, h, grading=None, anchor=None, boundary_growth=0.3):
    """Target element size: ``h`` times ``|x - anchor|^grading`` near the anchor,
    limited near short polygon edges so the size grows at most linearly."""
    v = domain.vertices
    elen = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    vlen = np.minimum(elen, np.roll(elen, 1))
    floor = h ** (1.0 / (1.0 - grading)) if grading else h

    tree = cKDTree(v)
    k = min(len(v), 8)

    def fh(x):
        s = np.full(len(x), float(h))
        if grading:
            r = np.linalg.norm(x - np.asarray(anchor), axis=1)
            s = np.minimum(s, h * np.maximum(r, floor) ** grading)
            s = np.maximum(s, floor)
        d, idx = tree.query(x, k=k)
        d, idx = d.reshape(len(x), k), idx.reshape(len(x), k)
        return np.minimum(s, np.min(vlen[idx] + boundary_growth * d, axis=1))

    return fh


def mesh_generate(domain, h, grading=None, anchor=None, max_iter=250, seed=0):
    """Conforming triangulation of ``domain`` with target size ``h``.

    ``grading = g`` in (0, 1) shrinks elements near ``anchor`` (default: the
    domain's first declared anchor) like ``h * distance^g``.
    """
    if not h > 0:
        raise InvalidInputError("mesh size h must be positive")
    if grading is not None and not 0.0 <= grading < 1.0:
        raise InvalidInputError("grading exponent must lie in [0, 1)")
    if grading and anchor is None:
        if not domain.anchors:
            raise InvalidInputError("graded meshing needs an anchor point")
        anchor = domain.anchors[0]
    v = domain.vertices
    is_rect = (len(v) == 4 and len(np.unique(np.round(v[:, 0], 14))) == 2
               and len(np.unique(np.round(v[:, 1], 14))) == 2)
    if is_rect and not grading:
        (x0, y0), (x1, y1) = v.min(axis=0), v.max(axis=0)
        return structured_rectangle(x0, x1, y0, y1, ceil((x1 - x0) / h - 1e-9),
                                    ceil((y1 - y0) / h - 1e-9))
    return _distmesh(domain, h, size_function(domain, h, grading, anchor),
                     _fixed_points(domain, anchor if grading else None), max_iter, seed)


def _distmesh(domain, h, fh, pfix, max_iter, seed):
    rng = np.random.default_rng(seed)
    fd = domain.signed_distance
    lo, hi = domain.bbox
    h0 = float(np.min(fh(np.vstack([pfix, domain.sample_interior(2000, rng)]))))
    geps = 1e-3 * h0
    dptol, ttol, Fscale, deltat = 2e-3, 0.1, 1.2, 0.2

    # initial distribution: rejection from a fine lattice, density ~ 1 / size^2
    step = max(h0, (hi - lo).max() / 600.0)
    xs = np.arange(lo[0], hi[0] + step, step)
    ys = np.arange(lo[1], hi[1] + step, step * np.sqrt(3) / 2)
    X, Y = np.meshgrid(xs, ys)
    X[1::2] += step / 2
    p = np.stack([X.ravel(), Y.ravel()], 1)
    p = p[fd(p) < -geps]
    r0 = (step / fh(p)) ** 2
    p = p[rng.random(len(p)) < r0]
    far = cKDTree(pfix).query(p)[0] > 0.5 * fh(p)
    p = np.vstack([pfix, p[far]])
    nfix = len(pfix)

    pold = np.full_like(p, np.inf)
    for _ in range(max_iter):
        if np.max(np.linalg.norm(p - pold, axis=1)) / h0 > ttol:
            pold = p.copy()
            t = Delaunay(p).simplices
            t = t[fd(p[t].mean(axis=1)) < -geps]
            bars = np.unique(np.sort(t[:, [[0, 1], [1, 2], [0, 2]]].reshape(-1, 2), 1), axis=0)
        barvec = p[bars[:, 0]] - p[bars[:, 1]]
        L = np.linalg.norm(barvec, axis=1)
        hbars = fh(p[bars].mean(axis=1))
        L0 = hbars * Fscale * np.sqrt(np.sum(L**2) / np.sum(hbars**2))
        F = np.maximum(L0 - L, 0.0)
        Fvec = (F / L)[:, None] * barvec
        Ftot = np.zeros_like(p)
        np.add.at(Ftot, bars[:, 0], Fvec)
        np.add.at(Ftot, bars[:, 1], -Fvec)
        Ftot[:nfix] = 0.0
        p = p + deltat * Ftot
        inside = domain.contains(p)
        out = ~inside
        out[:nfix] = False
        if np.any(out):
            p[out] = domain.closest_boundary_point(p[out])
        move = np.linalg.norm(deltat * Ftot[inside], axis=1)
        if len(move) and np.max(move) / h0 < dptol:
            break

    t = Delaunay(p).simplices
    t = t[fd(p[t].mean(axis=1)) < -geps]
    used = np.unique(t)
    remap = -np.ones(len(p), dtype=np.int64)
    remap[used] = np.arange(len(used))
    nodes, tris = p[used], remap[t]
    bnd = np.abs(fd(nodes)) < 1e-9 * max(1.0, h)
    mesh = Mesh(nodes, tris, bnd, float(h))
    _audit(mesh, domain)
    return mesh


def _audit(mesh, domain):
    if np.any(mesh.areas <= 0):
        raise MeshError("mesh has degenerate triangles")
    if not mesh.is_conforming():
        raise MeshError("mesh is not conforming")
    be = mesh.boundary_edges()
    mid = mesh.nodes[be].mean(axis=1)
    if not (np.all(mesh.boundary[be]) and np.all(domain.boundary_distance(mid) < 1e-9)):
        raise MeshError("mesh boundary does not follow the polygon")
    if abs(mesh.areas.sum() - domain.area) > 1e-9 * domain.area:
        raise MeshError("mesh does not cover the polygon")
