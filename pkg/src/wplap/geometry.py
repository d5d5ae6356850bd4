"""Planar polygonal Lipschitz domains, boundary charts and the flattening map."""

from dataclasses import dataclass, field
from math import atan, pi
from typing import List, Optional, Tuple

import numpy as np
import shapely

from .errors import CoverageError, DomainError, InvalidInputError
from .validation import check_epsilon, check_points, check_random_state


@dataclass(frozen=True)
class Chart:
    """Boundary chart: local frame at ``anchor`` plus a piecewise-linear graph ``psi``.

    Local coordinates are ``y1 = (x - anchor) . tangent`` and
    ``y2 = (x - anchor) . normal`` with ``normal = (cos a, sin a)`` for
    ``a = normal_angle`` pointing into the domain. ``knots`` are ``(s, psi(s))``
    pairs with increasing ``s``; ``psi`` is extended linearly past the ends.
    """

    anchor: Tuple[float, float]
    normal_angle: float
    knots: Tuple[Tuple[float, float], ...]
    radius: float

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float).reshape(-1, 2)
        if len(k) < 2 or np.any(np.diff(k[:, 0]) <= 0):
            raise InvalidInputError("chart knots need >= 2 strictly increasing abscissae")
        if self.radius <= 0:
            raise InvalidInputError("chart radius must be positive")
        object.__setattr__(self, "knots", tuple(map(tuple, k.tolist())))
        object.__setattr__(self, "anchor", tuple(map(float, self.anchor)))

    @property
    def normal(self):
        return np.array([np.cos(self.normal_angle), np.sin(self.normal_angle)])

    @property
    def tangent(self):
        n = self.normal
        return np.array([n[1], -n[0]])

    @property
    def slopes(self):
        k = np.asarray(self.knots)
        return np.diff(k[:, 1]) / np.diff(k[:, 0])

    @property
    def max_slope(self):
        return float(np.max(np.abs(self.slopes)))

    def psi(self, s):
        k = np.asarray(self.knots)
        s = np.asarray(s, dtype=float)
        sl = self.slopes
        out = np.interp(s, k[:, 0], k[:, 1])
        out = np.where(s < k[0, 0], k[0, 1] + sl[0] * (s - k[0, 0]), out)
        return np.where(s > k[-1, 0], k[-1, 1] + sl[-1] * (s - k[-1, 0]), out)

    def psi_prime(self, s):
        k = np.asarray(self.knots)
        idx = np.clip(np.searchsorted(k[:, 0], s, side="right") - 1, 0, len(k) - 2)
        return self.slopes[idx]

    def to_local(self, x):
        x = np.asarray(x, dtype=float) - np.asarray(self.anchor)
        return np.stack([x @ self.tangent, x @ self.normal], axis=-1)

    def to_global(self, y):
        y = np.asarray(y, dtype=float)
        return np.asarray(self.anchor) + y[..., :1] * self.tangent + y[..., 1:] * self.normal

    def above_graph(self, x):
        """Local graph representation: ``y2 > psi(y1)``."""
        y = self.to_local(x)
        return y[..., 1] > self.psi(y[..., 0])

    def in_ball(self, x, scale=1.0):
        d = np.asarray(x, float) - np.asarray(self.anchor)
        return np.sum(d * d, axis=-1) < (scale * self.radius) ** 2


def flatten_map(chart, y):
    """``Psi(y', y_n) = (y', y_n - psi(y'))`` in chart coordinates."""
    y = np.asarray(y, dtype=float)
    return np.stack([y[..., 0], y[..., 1] - chart.psi(y[..., 0])], axis=-1)


def unflatten_map(chart, z):
    """Inverse of :func:`flatten_map`."""
    z = np.asarray(z, dtype=float)
    return np.stack([z[..., 0], z[..., 1] + chart.psi(z[..., 0])], axis=-1)


def flatten_jacobian(chart, y):
    """``[[1, 0], [-psi'(y'), 1]]`` at each point; determinant is 1."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    jac = np.zeros((len(y), 2, 2))
    jac[:, 0, 0] = jac[:, 1, 1] = 1.0
    jac[:, 1, 0] = -chart.psi_prime(y[:, 0])
    return jac


def _polygon_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass
class PolygonalDomain:
    """Simple polygon with boundary charts and declared Lipschitz parameters.

    ``edge_kinds[i]`` describes the edge from vertex ``i`` to ``i + 1``:
    ``"boundary"`` edges must be covered by charts; ``"model"`` edges truncate
    a local model domain (such as the arc closing a corner sector) and are
    exempt from chart coverage.
    """

    vertices: np.ndarray
    charts: List[Chart] = field(default_factory=list)
    delta: Optional[float] = None
    R: Optional[float] = None
    edge_kinds: Optional[List[str]] = None
    name: str = "polygon"
    anchors: Tuple[Tuple[float, float], ...] = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = check_points(self.vertices, 2)
        if len(v) < 3:
            raise InvalidInputError("a polygon needs at least 3 vertices")
        if np.any(np.sum(np.diff(np.vstack([v, v[:1]]), axis=0) ** 2, axis=1) == 0):
            raise InvalidInputError("polygon has repeated consecutive vertices")
        if self.edge_kinds is None:
            self.edge_kinds = ["boundary"] * len(v)
        if _polygon_area(v) < 0:
            v = v[::-1].copy()
            # edge i now runs between former edges; reverse accordingly
            kinds = list(self.edge_kinds)
            self.edge_kinds = [kinds[(len(v) - 2 - i) % len(v)] for i in range(len(v))]
        if abs(_polygon_area(v)) == 0:
            raise InvalidInputError("degenerate polygon with zero area")
        self.vertices = v
        if not self.is_simple():
            raise InvalidInputError("polygon is not simple")

    @property
    def edges(self):
        return np.stack([self.vertices, np.roll(self.vertices, -1, axis=0)], axis=1)

    @property
    def area(self):
        return _polygon_area(self.vertices)

    @property
    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def is_simple(self):
        return bool(shapely.LinearRing(self.vertices).is_simple)

    @property
    def _shape(self):
        if getattr(self, "_shape_cache", None) is None:
            poly = shapely.Polygon(self.vertices)
            shapely.prepare(poly)
            ring = poly.exterior
            shapely.prepare(ring)
            self._shape_cache = (poly, ring)
        return self._shape_cache

    def contains(self, x):
        """Open-polygon membership, vectorized over rows of ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return shapely.contains_xy(self._shape[0], x[:, 0], x[:, 1])

    def boundary_distance(self, x, kinds=None):
        """Unsigned distance to the boundary (optionally only edges of given kinds)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if kinds is None:
            return shapely.distance(self._shape[1], shapely.points(x))
        e = self.edges
        if kinds is not None:
            e = e[[k in kinds for k in self.edge_kinds]]
        a, b = e[:, 0], e[:, 1]
        ab = b - a
        t = np.einsum("pk,ek->pe", x, ab) - np.einsum("ek,ek->e", a, ab)
        t = np.clip(t / np.einsum("ek,ek->e", ab, ab), 0.0, 1.0)
        proj = a[None] + t[..., None] * ab[None]
        return np.sqrt(np.min(np.sum((x[:, None] - proj) ** 2, axis=2), axis=1))

    def closest_boundary_point(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ring = self._shape[1]
        s = shapely.line_locate_point(ring, shapely.points(x))
        return shapely.get_coordinates(shapely.line_interpolate_point(ring, s))

    def signed_distance(self, x):
        """Negative inside, positive outside."""
        d = self.boundary_distance(x)
        return np.where(self.contains(x), -d, d)

    def interior_angle(self, i):
        v = self.vertices
        u, w = v[i - 1] - v[i], v[(i + 1) % len(v)] - v[i]
        ang = np.arctan2(u[1], u[0]) - np.arctan2(w[1], w[0])
        return float(ang % (2 * pi))

    def boundary_samples(self, per_edge=16, kinds=("boundary",)):
        """Points strictly inside the selected edges."""
        t = (np.arange(per_edge) + 0.5) / per_edge
        pts = [a + t[:, None] * (b - a) for (a, b), k in zip(self.edges, self.edge_kinds)
               if k in kinds]
        return np.vstack(pts) if pts else np.zeros((0, 2))

    def sample_interior(self, n, rng=None):
        rng = check_random_state(rng)
        lo, hi = self.bbox
        out = []
        while sum(len(o) for o in out) < n:
            cand = lo + (hi - lo) * rng.random((2 * n + 16, 2))
            out.append(cand[self.contains(cand)])
        return np.vstack(out)[:n]

    def sample_boundary(self, n, rng=None):
        """Uniform samples (by arc length) on the whole boundary."""
        rng = check_random_state(rng)
        e = self.edges
        lengths = np.linalg.norm(e[:, 1] - e[:, 0], axis=1)
        idx = rng.choice(len(e), size=n, p=lengths / lengths.sum())
        t = rng.random(n)[:, None]
        return e[idx, 0] + t * (e[idx, 1] - e[idx, 0])

    def to_spec(self):
        if self.name == "corner":
            return {"type": "corner", **self.params}
        return {"type": "polygon", "vertices": self.vertices.tolist(),
                "edge_kinds": list(self.edge_kinds)}


def vertex_charts(vertices, edge_kinds=None):
    """One chart per vertex built from its two adjacent edges.

    The chart normal bisects the inward edge normals; ``psi`` has one knot
    per neighbouring vertex. The radius stays below the adjacent edge
    lengths and the distance to non-adjacent edges.
    """
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    charts = []
    edges = np.stack([v, np.roll(v, -1, axis=0)], axis=1)
    for i in range(n):
        if edge_kinds is not None and edge_kinds[i - 1] == "model" and edge_kinds[i] == "model":
            continue
        u, x0, w = v[i - 1], v[i], v[(i + 1) % n]
        d1 = (x0 - u) / np.linalg.norm(x0 - u)
        d2 = (w - x0) / np.linalg.norm(w - x0)
        nrm = np.array([-d1[1], d1[0]]) + np.array([-d2[1], d2[0]])
        if np.linalg.norm(nrm) < 1e-12:
            raise InvalidInputError(f"cusp at vertex {i}")
        nrm /= np.linalg.norm(nrm)
        tan = np.array([nrm[1], -nrm[0]])
        su, sw = (u - x0) @ tan, (w - x0) @ tan
        if not su < 0 < sw:
            raise InvalidInputError(f"vertex {i} boundary is not a graph over its bisector")
        knots = ((su, (u - x0) @ nrm), (0.0, 0.0), (sw, (w - x0) @ nrm))
        others = [j for j in range(n) if j not in (i, (i - 1) % n)]
        dist = min(_point_segment_distance(x0, edges[j, 0], edges[j, 1]) for j in others)
        radius = 0.999 * min(dist, np.linalg.norm(x0 - u), np.linalg.norm(w - x0))
        charts.append(Chart(tuple(x0), float(np.arctan2(nrm[1], nrm[0])), knots, radius))
    return charts


def _point_segment_distance(x, a, b):
    ab = b - a
    t = np.clip((x - a) @ ab / (ab @ ab), 0.0, 1.0)
    return float(np.linalg.norm(x - (a + t * ab)))


def polygon_domain(vertices, edge_kinds=None, charts=None, name="polygon"):
    """Polygon with vertex charts; ``delta`` and ``R`` are read off the charts."""
    dom = PolygonalDomain(np.asarray(vertices, float), edge_kinds=edge_kinds, name=name)
    dom.charts = list(charts) if charts is not None else vertex_charts(dom.vertices, dom.edge_kinds)
    if dom.charts:
        dom.delta = max(c.max_slope for c in dom.charts)
        dom.R = min(c.radius for c in dom.charts)
    return dom


def rectangle_domain(x0=0.0, x1=1.0, y0=0.0, y1=1.0):
    return polygon_domain([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], name="rectangle")


def half_plane_domain(L=1.0):
    """Local model of the upper half plane: a box whose bottom edge is the boundary."""
    verts = [(-L, 0.0), (L, 0.0), (L, 2 * L), (-L, 2 * L)]
    chart = Chart((0.0, 0.0), pi / 2, ((-1.0, 0.0), (1.0, 0.0)), L)
    dom = PolygonalDomain(np.asarray(verts), charts=[chart], delta=0.0, R=L,
                          edge_kinds=["boundary", "model", "model", "model"], name="half-plane")
    return dom


def corner_domain(epsilon, chords=256):
    """Polygonal approximation of ``{x in B_1(0): x2 > -epsilon |x1|}``.

    The corner at the origin is exact; the unit circle arc is replaced by
    ``chords`` chords and marked as model boundary.
    """
    eps = check_epsilon(epsilon)
    if int(chords) < 2:
        raise DomainError("corner domain needs at least 2 chords")
    beta = atan(eps)
    angles = np.linspace(-beta, pi + beta, int(chords) + 1)
    arc = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    verts = np.vstack([[0.0, 0.0], arc])
    kinds = ["boundary"] + ["model"] * int(chords) + ["boundary"]
    chart = Chart((0.0, 0.0), pi / 2, ((-1.0, -eps), (0.0, 0.0), (1.0, -eps)), 1.0)
    return PolygonalDomain(verts, charts=[chart], delta=eps, R=1.0, edge_kinds=kinds,
                           name="corner", anchors=((0.0, 0.0),),
                           params={"epsilon": eps, "chords": int(chords)})


def corner_interior_angle(epsilon):
    return pi + 2 * atan(epsilon)


def lipschitz_params(domain, R=None, per_edge=16):
    """Largest chart slope ``max ||psi'||_inf`` over charts of radius ``>= R``.

    Raises :class:`CoverageError` when a sampled point of a ``"boundary"`` edge
    lies in no such chart ball.
    """
    R = domain.R if R is None else R
    charts = [c for c in domain.charts if R is None or c.radius >= R * (1 - 1e-12)]
    pts = domain.boundary_samples(per_edge)
    covered = np.zeros(len(pts), dtype=bool)
    for c in charts:
        covered |= c.in_ball(pts)
    if not charts or not np.all(covered):
        raise CoverageError(f"{int(np.sum(~covered))} boundary samples not covered at scale R={R}")
    return max(c.max_slope for c in charts)


def verify_charts(domain, n=2000, rng=None, shrink=0.99):
    """Sample each chart ball and count disagreements between membership and graph test."""
    rng = check_random_state(rng)
    bad = 0
    for c in domain.charts:
        r = shrink * c.radius * np.sqrt(rng.random(n))
        th = 2 * pi * rng.random(n)
        x = np.asarray(c.anchor) + np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        far = domain.boundary_distance(x) > 1e-9
        bad += int(np.sum(domain.contains(x[far]) != c.above_graph(x[far])))
    return bad


def _segment_disk_area(a, b, r):
    """Signed area of (triangle 0, a, b) intersected with the disk ``|x| < r``."""
    d = b - a
    A = d @ d
    if A == 0:
        return 0.0
    B = a @ d
    C = a @ a - r * r
    disc = B * B - A * C
    ts = [0.0]
    if disc > 0:
        sq = np.sqrt(disc)
        for t in ((-B - sq) / A, (-B + sq) / A):
            if 0.0 < t < 1.0:
                ts.append(t)
    ts.append(1.0)
    total = 0.0
    for t0, t1 in zip(ts[:-1], ts[1:]):
        p, q = a + t0 * d, a + t1 * d
        mid = a + 0.5 * (t0 + t1) * d
        if mid @ mid <= r * r:
            total += 0.5 * (p[0] * q[1] - p[1] * q[0])
        else:
            ang = np.arctan2(p[0] * q[1] - p[1] * q[0], p @ q)
            total += 0.5 * r * r * ang
    return total


def polygon_disk_area(vertices, center, r):
    """Exact area of a simple polygon intersected with the disk ``B_r(center)``."""
    v = np.asarray(vertices, float) - np.asarray(center, float)
    s = sum(_segment_disk_area(v[i], v[(i + 1) % len(v)], r) for i in range(len(v)))
    return abs(s)


@dataclass
class DensityReport:
    sup_interior_ratio: float
    interior_stderr: float
    inf_boundary_ratio: float
    boundary_stderr: float
    bound_interior: float
    bound_boundary: float
    balls: int
    max_radius: float
    violations: int
    exact_subset: list

    @property
    def ok(self):
        return self.violations == 0


def measure_density(domain, n_balls=10_000, mc_points=256, max_radius=None, rng=None,
                    exact_subset=20, sigmas=3.0):
    """Monte-Carlo measure density of ``domain`` at scales ``r <= max_radius``.

    Estimates ``sup |B_r(y)| / |Omega cap B_r(y)|`` over ``y`` in the domain and
    ``inf |B_r(y) minus Omega| / |B_r(y)|`` over boundary points ``y`` and
    compares them with ``4^n`` and ``4^-n`` (``n = 2``). A ball counts as a
    violation only when its estimate misses the bound by more than
    ``sigmas`` Monte-Carlo standard errors. For the first ``exact_subset``
    balls of each kind the exact polygon-disk area is recorded alongside.
    """
    rng = check_random_state(rng)
    n = 2
    max_radius = domain.R if max_radius is None else max_radius
    up, low = 4.0**n, 4.0**-n
    violations = 0
    exact = []

    def in_fraction(centers, radii):
        k = mc_points
        r = radii[:, None] * np.sqrt(rng.random((len(centers), k)))
        th = 2 * pi * rng.random((len(centers), k))
        pts = centers[:, None, :] + np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        inside = domain.contains(pts.reshape(-1, 2)).reshape(len(centers), k)
        return inside.mean(axis=1)

    ys = domain.sample_interior(n_balls, rng)
    rs = max_radius * (1.0 - rng.random(n_balls))
    frac = np.maximum(in_fraction(ys, rs), 1.0 / mc_points)
    se = np.sqrt(frac * (1 - frac) / mc_points)
    ratio_in = 1.0 / frac
    violations += int(np.sum(1.0 / np.maximum(frac + sigmas * se, 1e-300) > up))

    yb = domain.sample_boundary(n_balls, rng)
    rb = max_radius * (1.0 - rng.random(n_balls))
    out_frac = 1.0 - in_fraction(yb, rb)
    se_b = np.sqrt(out_frac * (1 - out_frac) / mc_points)
    violations += int(np.sum(out_frac + sigmas * se_b < low))

    for y, r, est in list(zip(ys, rs, frac))[:exact_subset]:
        exact.append(("interior", y.tolist(), float(r), float(est),
                      polygon_disk_area(domain.vertices, y, r) / (pi * r * r)))
    for y, r, est in list(zip(yb, rb, 1 - out_frac))[:exact_subset]:
        exact.append(("boundary", y.tolist(), float(r), float(est),
                      polygon_disk_area(domain.vertices, y, r) / (pi * r * r)))

    i_max = int(np.argmax(ratio_in))
    i_min = int(np.argmin(out_frac))
    return DensityReport(float(ratio_in[i_max]), float(se[i_max] / frac[i_max] ** 2),
                         float(out_frac[i_min]), float(se_b[i_min]), up, low,
                         2 * n_balls, float(max_radius), violations, exact)


def ball_image_containment(chart, center, radius, n=720):
    """Check ``B/2 subset Psi(B) subset 2B`` (balls concentric with ``Psi(center)``).

    Works in chart coordinates. Returns ``(inner_ok, outer_ok)``: ``Psi`` of the
    circle ``|y - center| = radius`` must stay within ``2 radius`` of
    ``Psi(center)`` and outside ``radius / 2``; since ``Psi`` is a
    homeomorphism this brackets ``Psi(B)``.
    """
    th = np.linspace(0, 2 * pi, n, endpoint=False)
    c = np.asarray(center, float)
    circ = c + radius * np.stack([np.cos(th), np.sin(th)], axis=1)
    img = flatten_map(chart, circ)
    d = np.linalg.norm(img - flatten_map(chart, c), axis=1)
    return bool(np.all(d >= 0.5 * radius)), bool(np.all(d <= 2.0 * radius))
