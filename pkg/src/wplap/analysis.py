"""Weighted L^q norms, discrete maximal operators, gradient-ratio experiments
and the corner example.

Maximal operators act on :class:`GridFunction` objects: cell values on a
uniform Cartesian grid, extended outside the grid by a constant exterior
value (zero by default, i.e. zero extension). A disk of radius ``r`` around
a cell center contains the cells whose centers lie at distance ``< r``;
averages divide by the full disk count, so exterior cells take part.
"""

import csv
import io
from dataclasses import dataclass, field
from math import atan, ceil, pi
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .errors import InconsistencyError, InvalidInputError, QuadratureOverflowError
from .solver import DiscreteScalarField, DiscreteVectorField
from .validation import check_epsilon, check_random_state


# ---------------------------------------------------------------- grid functions

@dataclass
class GridFunction:
    """Cell values ``values[i, j]`` at centers ``origin + ((i + 1/2) h, (j + 1/2) h)``."""

    values: np.ndarray
    origin: tuple
    h: float
    exterior: float = 0.0
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise InvalidInputError("grid values must be a 2-d array")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("grid values must be finite")
        if not self.h > 0:
            raise InvalidInputError("grid spacing must be positive")
        self.origin = tuple(map(float, self.origin))
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)

    @classmethod
    def from_function(cls, func, box, n, domain=None, exterior=0.0):
        """Sample ``func(points) -> (N,)`` at cell centers of a grid covering ``box``.

        ``n`` cells span the longer side. Cells outside ``domain`` take the
        exterior value.
        """
        x0, x1, y0, y1 = map(float, box)
        h = max(x1 - x0, y1 - y0) / int(n)
        nx, ny = max(1, ceil((x1 - x0) / h - 1e-9)), max(1, ceil((y1 - y0) / h - 1e-9))
        g = cls(np.zeros((nx, ny)), (x0, y0), h, exterior)
        pts = g.centers().reshape(-1, 2)
        inside = np.ones(len(pts), bool) if domain is None else domain.contains(pts)
        vals = np.full(len(pts), float(exterior))
        if np.any(inside):
            vals[inside] = np.asarray(func(pts[inside]), float)
        g.values = vals.reshape(nx, ny)
        g.mask = inside.reshape(nx, ny)
        return g

    @classmethod
    def from_mesh(cls, mesh, nodal, box, n, domain=None):
        """Resample a P1 field by barycentric interpolation; zero outside the mesh."""
        g = cls.from_function(lambda x: np.nan_to_num(mesh.interpolate(nodal, x)), box, n, domain)
        return g

    @property
    def shape(self):
        return self.values.shape

    @property
    def box(self):
        nx, ny = self.shape
        x0, y0 = self.origin
        return (x0, x0 + nx * self.h, y0, y0 + ny * self.h)

    def centers(self):
        nx, ny = self.shape
        x0, y0 = self.origin
        gx, gy = np.meshgrid(x0 + (np.arange(nx) + 0.5) * self.h,
                             y0 + (np.arange(ny) + 0.5) * self.h, indexing="ij")
        return np.stack([gx, gy], axis=-1)

    def pad(self, cells):
        """Extend the grid by ``cells`` exterior cells on every side."""
        c = int(cells)
        v = np.pad(self.values, c, constant_values=self.exterior)
        m = np.pad(self.mask, c, constant_values=False)
        x0, y0 = self.origin
        return GridFunction(v, (x0 - c * self.h, y0 - c * self.h), self.h, self.exterior, m)

    def with_values(self, values, exterior=None):
        return GridFunction(values, self.origin, self.h,
                            self.exterior if exterior is None else exterior, self.mask.copy())

    def __add__(self, c):
        return self.with_values(self.values + c, self.exterior + c)

    def __mul__(self, c):
        return self.with_values(self.values * c, self.exterior * c)

    __rmul__ = __mul__

    def lq_norm(self, q):
        if self.exterior != 0.0:
            raise InvalidInputError("L^q norm needs compact support (zero exterior)")
        return float(np.sum(np.abs(self.values) ** q) * self.h**2) ** (1.0 / q)


# ---------------------------------------------------------------- norms

def _field_samples(f):
    if isinstance(f, DiscreteVectorField):
        return f.mesh.centroids, f.norms(), f.mesh.areas
    if isinstance(f, GridFunction):
        v = np.abs(f.values).ravel()
        return f.centers().reshape(-1, 2), v, np.full(v.shape, f.h**2)
    raise InvalidInputError("expected a DiscreteVectorField or GridFunction")


def weighted_lq_norm(f, omega=None, q=2.0, region=None):
    """``(sum |f|^q omega^q |cell|)^(1/q)`` over cells or elements in ``region``.

    ``omega`` is ``None`` (unweighted), a callable on points or a per-cell
    array. ``region`` is ``None``, an object with ``contains`` or a callable
    returning a boolean mask.
    """
    if not q >= 1:
        raise InvalidInputError("q must be >= 1")
    pts, vals, meas = _field_samples(f)
    if omega is None:
        w = np.ones_like(vals)
    elif callable(omega):
        w = np.asarray(omega(pts), float)
    else:
        w = np.asarray(omega, float)
    keep = np.ones(len(vals), bool)
    if region is not None:
        keep = region.contains(pts) if hasattr(region, "contains") else np.asarray(region(pts))
    with np.errstate(over="ignore", invalid="ignore"):
        terms = (vals * w) ** q * meas
    terms = np.where(keep, terms, 0.0)
    if not np.all(np.isfinite(terms)):
        bad = int(np.argmax(~np.isfinite(terms)))
        raise QuadratureOverflowError(f"L^q integrand overflows in cell {bad} at {pts[bad]}")
    return float(np.sum(terms) ** (1.0 / q))


def cz_ratio(u, F, omega, q):
    """``||omega grad u||_q / ||omega F||_q`` on the mesh of ``u``."""
    grad = u.gradient() if isinstance(u, DiscreteScalarField) else u
    num = weighted_lq_norm(grad, omega, q)
    den = weighted_lq_norm(F, omega, q)
    if den == 0.0:
        if num != 0.0:
            raise InconsistencyError("nonzero gradient for vanishing datum")
        return 0.0
    return num / den


# ---------------------------------------------------------------- maximal operators

def _radii_cells(shape, radii):
    diam = float(np.hypot(*shape))
    if radii == "dyadic":
        out, r = [], 1
        while r <= diam:
            out.append(r)
            r *= 2
        return out
    if radii == "all":
        return list(range(1, int(ceil(diam)) + 1))
    out = sorted({int(r) for r in radii})
    if not out or out[0] < 1:
        raise InvalidInputError("radii are positive cell counts")
    return out


def disk_offsets(r):
    """Integer offsets ``(a, b)`` with ``a^2 + b^2 < r^2``."""
    k = int(ceil(r))
    a, b = np.meshgrid(np.arange(-k, k + 1), np.arange(-k, k + 1), indexing="ij")
    inside = a * a + b * b < r * r
    return np.stack([a[inside], b[inside]], 1)


def _disk_kernel(r):
    k = int(ceil(r))
    a, b = np.meshgrid(np.arange(-k, k + 1), np.arange(-k, k + 1), indexing="ij")
    return (a * a + b * b < r * r).astype(float)


def _disk_sums(g, r):
    """Sums of the zero-extended array ``g`` over every cell's disk."""
    return fftconvolve(g, _disk_kernel(r), mode="same")


def maximal(f, rho=1.0, radii="dyadic"):
    """Discrete Hardy-Littlewood maximal function ``sup_r (mean_{B_r} |f|^rho)^(1/rho)``.

    ``radii`` is ``"dyadic"`` (one cell doubling up to the grid diameter),
    ``"all"`` (every whole number of cells) or an explicit list in cells.
    """
    if rho < 1:
        raise InvalidInputError("rho must be >= 1")
    a = np.abs(f.values) ** rho
    e = abs(f.exterior) ** rho
    best = a.copy()  # radius of one cell: the cell itself
    for r in _radii_cells(f.shape, radii):
        if r == 1:
            continue
        n = len(disk_offsets(r))
        avg = np.maximum(_disk_sums(a - e, r) / n + e, 0.0)
        best = np.maximum(best, avg)
    return f.with_values(best ** (1.0 / rho), abs(f.exterior))


def sharp_maximal(f, rho=1.0, radii="dyadic"):
    """Discrete sharp maximal function ``sup_r (mean_{B_r} |f - <f>_{B_r}|^rho)^(1/rho)``."""
    if rho < 1:
        raise InvalidInputError("rho must be >= 1")
    nx, ny = f.shape
    e = f.exterior
    best = np.zeros(f.shape)
    for r in _radii_cells(f.shape, radii):
        if r == 1:
            continue
        offs = disk_offsets(r)
        n = len(offs)
        mean = _disk_sums(f.values - e, r) / n + e
        k = int(ceil(r))
        fp = np.pad(f.values, k, constant_values=e)
        acc = np.zeros(f.shape)
        for a, b in offs:
            acc += np.abs(fp[k + a:k + a + nx, k + b:k + b + ny] - mean) ** rho
        best = np.maximum(best, acc / n)
    return f.with_values(best ** (1.0 / rho), 0.0)


@dataclass
class FSRecord:
    ratio: float
    q: float
    norm_f: float
    norm_sharp: float
    degenerate: bool = False


def fefferman_stein_ratio(f, q, pad=None, radii="dyadic", sharp=None):
    """``||f||_q / (q ||M#_1 f||_q)`` for compactly supported ``f``.

    The grid is padded by ``pad`` cells (default: the grid size) so that the
    tail of ``M#_1 f`` outside the support is captured. A precomputed sharp
    maximal function of the padded grid can be passed as ``sharp``.
    """
    if not q > 1:
        raise InvalidInputError("q must exceed 1")
    if f.exterior != 0.0:
        raise InvalidInputError("f must be compactly supported (zero exterior)")
    pad = max(f.shape) if pad is None else int(pad)
    fp = f.pad(pad)
    if sharp is None:
        sharp = sharp_maximal(fp, 1.0, radii)
    nf = fp.lq_norm(q)
    ns = sharp.lq_norm(q)
    if ns == 0.0:
        return FSRecord(float("nan"), q, nf, ns, degenerate=True)
    return FSRecord(nf / (q * ns), q, nf, ns)


def fs_corpus(n=32):
    """Compactly supported test functions on ``[0, 1]^2``: indicators, bumps, checkerboards."""
    box = (0.0, 1.0, 0.0, 1.0)
    out = {}
    g = GridFunction(np.zeros((n, n)), (0.0, 0.0), 1.0 / n)
    v = g.values.copy()
    v[n // 2, n // 2] = 1.0
    out["cell_indicator"] = g.with_values(v)
    out["square_indicator"] = GridFunction.from_function(
        lambda x: (np.max(np.abs(x - 0.5), axis=1) < 0.25).astype(float), box, n)
    out["disk_indicator"] = GridFunction.from_function(
        lambda x: (np.hypot(*(x - 0.5).T) < 0.3).astype(float), box, n)

    def bump(x, r0=0.4):
        s = np.sum((x - 0.5) ** 2, axis=1) / r0**2
        with np.errstate(divide="ignore"):
            return np.where(s < 1, np.exp(-1.0 / np.maximum(1 - s, 1e-300)), 0.0)

    out["smooth_bump"] = GridFunction.from_function(bump, box, n)
    out["cone"] = GridFunction.from_function(
        lambda x: np.maximum(0.0, 1 - np.hypot(*(x - 0.5).T) / 0.4), box, n)
    out["checkerboard"] = GridFunction.from_function(
        lambda x: (-1.0) ** (np.floor(4 * x[:, 0]) + np.floor(4 * x[:, 1])), box, n)
    return out


# ---------------------------------------------------------------- corner example

@dataclass(frozen=True)
class CornerSolution:
    """``u = r^alpha cos(alpha (phi - pi/2))`` on ``{x2 > -eps |x1|}``.

    ``alpha = (pi/2) / (pi/2 + arctan eps)``; ``u`` vanishes on the rays
    ``phi = -arctan eps`` and ``phi = pi + arctan eps``.
    """

    epsilon: float

    @property
    def beta(self):
        return atan(self.epsilon)

    @property
    def alpha(self):
        return (pi / 2) / (pi / 2 + self.beta)

    @property
    def opening(self):
        return pi + 2 * self.beta

    @property
    def critical_q(self):
        """``2 + pi / arctan eps``: ``grad u`` lies in ``L^q`` near the corner iff ``q`` is smaller."""
        return 2.0 + pi / self.beta if self.beta > 0 else np.inf

    def polar(self, x):
        x = np.atleast_2d(np.asarray(x, float))
        r = np.hypot(x[:, 0], x[:, 1])
        phi = np.arctan2(x[:, 1], x[:, 0])
        phi = np.where(phi < -pi / 2, phi + 2 * pi, phi)
        return r, phi

    def u(self, x):
        r, phi = self.polar(x)
        return r**self.alpha * np.cos(self.alpha * (phi - pi / 2))

    def grad(self, x):
        r, phi = self.polar(x)
        a = self.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            ur = a * r ** (a - 1) * np.cos(a * (phi - pi / 2))
            ut = -a * r ** (a - 1) * np.sin(a * (phi - pi / 2))
        c, s = np.cos(phi), np.sin(phi)
        return np.stack([ur * c - ut * s, ur * s + ut * c], axis=1)

    def grad_norm(self, r):
        r = np.asarray(r, float)
        with np.errstate(divide="ignore"):
            return self.alpha * r ** (self.alpha - 1)

    def shell_power_integral(self, q, r0, r1, nodes=32):
        """``int_{r0 < |x| < r1} |grad u|^q`` over the sector, Gauss-Legendre in ``log r``."""
        t, w = np.polynomial.legendre.leggauss(nodes)
        lo, hi = np.log(r0), np.log(r1)
        s = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        r = np.exp(s)
        return float(self.opening * 0.5 * (hi - lo) * np.sum(w * self.grad_norm(r) ** q * r * r))

    def lq_power(self, q):
        """Closed-form ``int_{Omega cap B_1} |grad u|^q``; infinite from the critical ``q`` on."""
        s = q * (self.alpha - 1) + 2
        return self.opening * self.alpha**q / s if s > 0 else np.inf

    def laplacian_residual(self, points, hg):
        """Five-point finite-difference Laplacian of ``u`` at ``points``."""
        p = np.atleast_2d(np.asarray(points, float))
        ex, ey = np.array([hg, 0.0]), np.array([0.0, hg])
        lap = (self.u(p + ex) + self.u(p - ex) + self.u(p + ey) + self.u(p - ey)
               - 4 * self.u(p)) / hg**2
        return lap


def corner_exact(epsilon):
    return CornerSolution(check_epsilon(epsilon))


@dataclass
class ThresholdFit:
    epsilon: float
    q_grid: list
    levels: list
    q_hat: Optional[float]
    inconclusive: bool
    decay_exponents: dict
    classification: dict
    rows: list = field(default_factory=list)
    analytic_q: float = float("nan")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["epsilon", "q", "annulus_k", "norm", "classification"])
        w.writeheader()
        for r in self.rows:
            w.writerow(r)
        return buf.getvalue()

    def to_dict(self):
        return {"epsilon": self.epsilon, "q_grid": list(self.q_grid), "levels": list(self.levels),
                "q_hat": self.q_hat, "analytic_q": self.analytic_q,
                "inconclusive": self.inconclusive,
                "decay_exponents": {str(k): v for k, v in self.decay_exponents.items()},
                "classification": {str(k): v for k, v in self.classification.items()}}


def threshold_fit(epsilon, q_grid, levels=range(4, 13), growth=0.1):
    """Locate the integrability threshold of ``grad u`` for the corner solution.

    For each ``q`` the integral ``N_k = int_{2^-k < r < 1} |grad u|^q`` is
    formed for ``k`` in ``levels``. ``q`` is labelled divergent when each of
    the last three increments ``N_{k+1} - N_k`` exceeds ``growth`` times the
    running value. The estimate ``q_hat`` is the zero crossing of a straight
    line fitted to the mean increment decay rate ``log2(d_{k+1} / d_k)``
    against ``q``: a tail integral converges exactly when that rate is
    negative. A grid whose rates all share one sign is inconclusive.
    """
    sol = corner_exact(epsilon)
    q_grid = [float(q) for q in q_grid]
    levels = sorted(int(k) for k in levels)
    if len(levels) < 5:
        raise InvalidInputError("need at least five refinement levels")
    if len(q_grid) < 2:
        raise InvalidInputError("need at least two exponents")
    rows, rates, labels = [], {}, {}
    kmax = levels[-1]
    for q in q_grid:
        shells = np.array([sol.shell_power_integral(q, 2.0 ** -(j + 1), 2.0**-j)
                           for j in range(kmax)])
        N = np.cumsum(shells)[np.array(levels) - 1]
        d = np.diff(N)
        divergent = bool(np.all(d[-3:] > growth * N[-3:]))
        labels[q] = "divergent" if divergent else "convergent"
        rates[q] = float(np.mean(np.log2(d[1:] / d[:-1])))
        for k, n in zip(levels, N):
            rows.append({"epsilon": sol.epsilon, "q": q, "annulus_k": k, "norm": n ** (1.0 / q),
                         "classification": labels[q]})
    r = np.array([rates[q] for q in q_grid])
    inconclusive = bool(np.all(r < 0) or np.all(r > 0))
    q_hat = None
    if not inconclusive:
        slope, icpt = np.polyfit(np.array(q_grid), r, 1)
        q_hat = float(-icpt / slope)
    return ThresholdFit(sol.epsilon, q_grid, levels, q_hat, inconclusive, rates, labels, rows,
                        sol.critical_q)


def linearity_fit(fits):
    """Regress ``1 / (q_hat - 2)`` on ``arctan eps`` through the origin; returns ``(slope, R^2)``."""
    x = np.array([atan(f.epsilon) for f in fits])
    y = np.array([1.0 / (f.q_hat - 2.0) for f in fits])
    slope = float(x @ y / (x @ x))
    resid = y - slope * x
    r2 = 1.0 - float(resid @ resid) / float(np.sum((y - y.mean()) ** 2))
    return slope, r2


# ---------------------------------------------------------------- random data and sweeps

def random_datum(seed, modes=6, max_frequency=6.0, amplitude=1.0):
    """Seeded smooth vector field ``x -> sum_k c_k sin(k . x + phase_k)``, shape (N, 2)."""
    rng = check_random_state(seed)
    k = rng.uniform(-max_frequency, max_frequency, size=(modes, 2))
    ph = rng.uniform(0, 2 * pi, size=modes)
    c = rng.normal(size=(modes, 2)) * amplitude / np.sqrt(modes)

    def F(x):
        x = np.atleast_2d(np.asarray(x, float))
        return np.sin(x @ k.T + ph) @ c

    return F


@dataclass
class SweepRow:
    weight_eps: float
    boundary_eps: float
    q: float
    h: float
    seed: object
    ratio: float
    hypothesis: bool
    n_nodes: int

    def to_dict(self):
        return dict(self.__dict__)


def hypothesis_tag(weight_bmo, boundary_delta, q, delta, n=2):
    """Whether a run sits inside the smallness regime.

    Requires ``q * bmo <= delta`` and ``q * delta_Omega <= delta``, and the
    Lipschitz constant of the boundary at most ``1 / (2 n)``.
    """
    return bool(q * weight_bmo <= delta and q * boundary_delta <= delta
                and boundary_delta <= 1.0 / (2 * n))


def weight_bmo_estimate(M, domain, levels=3, grid=9, n_random=16, seed=0, cells=32):
    """Sampled log-BMO of ``M`` over balls of radius at most the domain scale ``R``."""
    from .matrixweight import QuadratureSpec
    from .oscillation import BallSampler, bmo_seminorm

    sampler = BallSampler(domain, domain.R, levels=levels, grid=grid, n_random=n_random,
                          seed=seed, quad=QuadratureSpec(cells=cells, domain=domain))
    return bmo_seminorm(M, sampler).sup


def datum_sweep(mesh, M, seeds, solve_config, statistic, modes=6, max_frequency=6.0):
    """Solve for each seeded random datum and evaluate ``statistic(u, F)``."""
    from .solver import solve

    out = []
    for s in seeds:
        F = DiscreteVectorField.from_function(mesh, random_datum(s, modes, max_frequency))
        u, _ = solve(mesh, M, F, solve_config)
        out.append(statistic(u, F))
    return np.array(out)
