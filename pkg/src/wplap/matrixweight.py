"""Matrix-weight primitives.

Symmetric positive definite algebra (batched cyclic Jacobi eigensolver,
matrix exponential and logarithm), weight fields ``x -> M(x)``, the scalar
weight ``omega = |M|`` and logarithmic means over balls.

All array functions accept a single ``(n, n)`` matrix or a batch of shape
``(..., n, n)``.
"""

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateQuadratureError,
    InvalidInputError,
    NotPositiveDefiniteError,
)
from .validation import check_finite, check_points, check_spd, check_symmetric

JACOBI_TOL = 1e-15
JACOBI_MAX_SWEEPS = 50


def eigh_jacobi(m, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of symmetric matrices by cyclic Jacobi rotations.

    The input is symmetrized first. Returns ``(w, v)`` with eigenvalues in
    ascending order and eigenvectors in the columns of ``v``, both batched
    like the input.
    """
    a = np.array(m, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInputError(f"expected square matrices, got shape {a.shape}")
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    n = a.shape[-1]
    batch = a.shape[:-2]
    a = a.reshape((-1, n, n))
    v = np.broadcast_to(np.eye(n), a.shape).copy()
    scale = np.sqrt(np.sum(a * a, axis=(1, 2)))
    scale[scale == 0.0] = 1.0
    offmask = ~np.eye(n, dtype=bool)

    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(a[:, offmask] ** 2, axis=1))
        if np.all(off <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                active = np.abs(apq) > 1e-300
                if not np.any(active):
                    continue
                safe = np.where(active, apq, 1.0)
                theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t[theta == 0.0] = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c = np.where(active, c, 1.0)[:, None]
                s = np.where(active, s, 0.0)[:, None]

                ap, aq = a[:, :, p].copy(), a[:, :, q].copy()
                a[:, :, p] = c * ap - s * aq
                a[:, :, q] = s * ap + c * aq
                rp, rq = a[:, p, :].copy(), a[:, q, :].copy()
                a[:, p, :] = c * rp - s * rq
                a[:, q, :] = s * rp + c * rq
                vp, vq = v[:, :, p].copy(), v[:, :, q].copy()
                v[:, :, p] = c * vp - s * vq
                v[:, :, q] = s * vp + c * vq

    w = np.diagonal(a, axis1=1, axis2=2).copy()
    order = np.argsort(w, axis=1)
    w = np.take_along_axis(w, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return w.reshape(batch + (n,)), v.reshape(batch + (n, n))


def sym_apply(m, func):
    """``V diag(func(w)) V^T`` for symmetric ``m``."""
    w, v = eigh_jacobi(m)
    return np.einsum("...ik,...k,...jk->...ij", v, func(w), v)


def matrix_log(m):
    """Logarithm of SPD matrices through their spectral decomposition."""
    m = check_symmetric(m)
    w, v = eigh_jacobi(m)
    if np.any(w <= 0.0):
        raise NotPositiveDefiniteError("matrix_log requires positive definite input")
    return np.einsum("...ik,...k,...jk->...ij", v, np.log(w), v)


def matrix_exp(s):
    """Exponential of symmetric matrices; the result is SPD."""
    s = check_symmetric(s)
    return sym_apply(s, np.exp)


def matrix_inv(m):
    return sym_apply(m, lambda w: 1.0 / w)


def sym_norm(s):
    """Spectral norm of symmetric matrices (largest absolute eigenvalue)."""
    w, _ = eigh_jacobi(s)
    return np.max(np.abs(w), axis=-1)


def spectral_norm(m):
    """Spectral norm of an SPD matrix, i.e. its largest eigenvalue."""
    m = check_finite(np.asarray(m), "matrix")
    return sym_norm(m)


def condition_numbers(m):
    w, _ = eigh_jacobi(m)
    return w[..., -1] / w[..., 0]


@dataclass(frozen=True)
class SpdMatrix:
    """Validated dense symmetric positive definite matrix."""

    entries: np.ndarray

    def __post_init__(self):
        e = check_spd(np.asarray(self.entries, dtype=float))
        if e.ndim != 2 or e.shape[0] < 2:
            raise InvalidInputError("SpdMatrix needs a single n x n array with n >= 2")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def dim(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("ball center must be finite")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidInputError("ball radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return len(self.center)

    @property
    def volume(self):
        from math import gamma, pi

        n = self.dim
        return pi ** (n / 2) / gamma(n / 2 + 1) * self.radius**n

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum((x - np.asarray(self.center)) ** 2, axis=-1) < self.radius**2


@dataclass(frozen=True)
class QuadratureSpec:
    """Tensor midpoint rule on the bounding cube of a ball.

    ``cells`` cells per axis; nodes are cell midpoints inside the ball (and
    inside ``domain`` when one is given, see ``clip``).
    """

    cells: int = 64
    domain: Optional[object] = None
    clip: bool = True
    anchor_tol: float = 1e-12


class BallNodes(NamedTuple):
    points: np.ndarray
    clipped: bool
    dropped: int


def ball_nodes(ball, quad=None, anchors=()):
    """Quadrature nodes for ``ball``; every node carries equal weight."""
    quad = quad or QuadratureSpec()
    n = ball.dim
    k = int(quad.cells)
    if k < 1:
        raise InvalidInputError("quadrature needs at least one cell per axis")
    t = -1.0 + (2.0 * np.arange(k) + 1.0) / k
    grids = np.meshgrid(*([t] * n), indexing="ij")
    unit = np.stack([g.ravel() for g in grids], axis=1)
    unit = unit[np.sum(unit * unit, axis=1) < 1.0]
    pts = np.asarray(ball.center) + ball.radius * unit

    clipped = False
    if quad.domain is not None and quad.clip:
        inside = quad.domain.contains(pts)
        clipped = not np.all(inside)
        pts = pts[inside]

    dropped = 0
    for a in anchors:
        far = np.sqrt(np.sum((pts - np.asarray(a)) ** 2, axis=1)) >= quad.anchor_tol
        dropped += int(np.sum(~far))
        pts = pts[far]
    if len(pts) == 0:
        raise DegenerateQuadratureError(f"no admissible quadrature nodes in {ball}")
    return BallNodes(pts, clipped, dropped)


class ConditionReport(NamedTuple):
    value: float
    bound: float
    violated: bool

    def __float__(self):
        return float(self.value)


class MatrixWeightField:
    """A map ``x -> M(x)`` into SPD matrices.

    Subclasses implement ``_evaluate(points) -> (N, n, n)``. ``anchors`` lists
    declared singular points which quadrature nodes must avoid.
    """

    family_tag = "user-supplied"

    def __init__(self, dim=2, lambda_bound=1.0, anchors=()):
        if int(dim) < 2:
            raise InvalidInputError("matrix weights need dimension n >= 2")
        if lambda_bound < 1.0:
            raise InvalidInputError("condition bound Lambda must be >= 1")
        self.dim = int(dim)
        self.lambda_bound = float(lambda_bound)
        self.anchors = tuple(tuple(map(float, a)) for a in anchors)

    def __call__(self, x):
        x = check_points(x, self.dim)
        return self._evaluate(x)

    def _evaluate(self, x):
        raise NotImplementedError

    def metadata(self):
        return {
            "family": self.family_tag,
            "dim": self.dim,
            "lambda": self.lambda_bound,
            "anchors": [list(a) for a in self.anchors],
        }

    def scalar_weight(self):
        """The scalar weight ``omega = |M|``."""
        return ScalarWeight(lambda x: spectral_norm(self(x)), self.dim, self.anchors)

    def squared(self):
        """The diffusion field ``A = M^2``."""
        lam = self.lambda_bound**2
        return CallableField(
            lambda x: np.einsum("...ij,...jk->...ik", self(x), self(x)),
            dim=self.dim,
            lambda_bound=lam,
            anchors=self.anchors,
            tag=f"squared({self.family_tag})",
        )


class ConstantField(MatrixWeightField):
    family_tag = "constant"

    def __init__(self, matrix):
        m = SpdMatrix(matrix).entries
        super().__init__(m.shape[0], float(condition_numbers(m)))
        self.matrix = m

    def _evaluate(self, x):
        return np.broadcast_to(self.matrix, (len(x),) + self.matrix.shape).copy()

    def metadata(self):
        meta = super().metadata()
        meta["matrix"] = self.matrix.tolist()
        return meta


class PowerField(MatrixWeightField):
    """``M(x) = |x - anchor|^exponent * base`` with a constant SPD ``base``."""

    family_tag = "power"

    def __init__(self, exponent, anchor=(0.0, 0.0), base=None):
        anchor = tuple(map(float, anchor))
        base = np.eye(len(anchor)) if base is None else SpdMatrix(base).entries
        super().__init__(len(anchor), float(condition_numbers(base)), anchors=[anchor])
        self.exponent = float(exponent)
        self.anchor = anchor
        self.base = base

    def _evaluate(self, x):
        r = np.sqrt(np.sum((x - np.asarray(self.anchor)) ** 2, axis=1))
        return r[:, None, None] ** self.exponent * self.base

    def metadata(self):
        meta = super().metadata()
        meta.update(exponent=self.exponent, anchor=list(self.anchor), base=self.base.tolist())
        return meta


class RotatedAnisotropicField(MatrixWeightField):
    """``M(x) = Q(theta(x)) diag(1, ratio) Q(theta(x))^T`` in the plane.

    ``theta(x) = angle + twist * (x1 + x2)``; the condition number is ``ratio``
    everywhere.
    """

    family_tag = "rotated-anisotropic"

    def __init__(self, ratio, angle=0.0, twist=0.0):
        if ratio < 1.0:
            raise InvalidInputError("anisotropy ratio must be >= 1")
        super().__init__(2, float(ratio))
        self.ratio, self.angle, self.twist = float(ratio), float(angle), float(twist)

    def _evaluate(self, x):
        th = self.angle + self.twist * (x[:, 0] + x[:, 1])
        c, s = np.cos(th), np.sin(th)
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = c * c + self.ratio * s * s
        out[:, 1, 1] = s * s + self.ratio * c * c
        out[:, 0, 1] = out[:, 1, 0] = c * s * (1.0 - self.ratio)
        return out

    def metadata(self):
        meta = super().metadata()
        meta.update(ratio=self.ratio, angle=self.angle, twist=self.twist)
        return meta


class GridField(MatrixWeightField):
    """Planar field from a rectilinear grid of (m11, m12, m22) with bilinear interpolation.

    Points outside the grid are clamped to the nearest grid cell.
    """

    def __init__(self, xs, ys, m11, m12, m22):
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        shape = (len(xs), len(ys))
        m11, m12, m22 = (np.asarray(a, float).reshape(shape) for a in (m11, m12, m22))
        if len(xs) < 2 or len(ys) < 2 or np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
            raise InvalidInputError("grid coordinates must be strictly increasing, >= 2 each")
        nodes = np.stack([np.stack([m11, m12], -1), np.stack([m12, m22], -1)], -2)
        w, _ = eigh_jacobi(nodes)
        if np.any(w[..., 0] <= 0):
            raise NotPositiveDefiniteError("grid field has non-SPD nodal matrices")
        super().__init__(2, float(np.max(w[..., 1] / w[..., 0])))
        self.xs, self.ys, self.nodes = xs, ys, nodes

    def _evaluate(self, x):
        i = np.clip(np.searchsorted(self.xs, x[:, 0]) - 1, 0, len(self.xs) - 2)
        j = np.clip(np.searchsorted(self.ys, x[:, 1]) - 1, 0, len(self.ys) - 2)
        tx = np.clip((x[:, 0] - self.xs[i]) / (self.xs[i + 1] - self.xs[i]), 0.0, 1.0)
        ty = np.clip((x[:, 1] - self.ys[j]) / (self.ys[j + 1] - self.ys[j]), 0.0, 1.0)
        tx, ty = tx[:, None, None], ty[:, None, None]
        n = self.nodes
        return ((1 - tx) * (1 - ty) * n[i, j] + tx * (1 - ty) * n[i + 1, j]
                + (1 - tx) * ty * n[i, j + 1] + tx * ty * n[i + 1, j + 1])


class CallableField(MatrixWeightField):
    def __init__(self, func, dim=2, lambda_bound=1.0, anchors=(), tag="user-supplied"):
        super().__init__(dim, lambda_bound, anchors)
        self.func = func
        self.family_tag = tag

    def _evaluate(self, x):
        return np.asarray(self.func(x), dtype=float)


class ScalarWeight:
    """A positive scalar weight ``x -> omega(x)`` with declared singular anchors."""

    def __init__(self, func: Callable, dim=2, anchors: Sequence = ()):
        self.func = func
        self.dim = dim
        self.anchors = tuple(tuple(map(float, a)) for a in anchors)

    def __call__(self, x):
        return np.asarray(self.func(check_points(x, self.dim)), dtype=float)

    def power(self, s):
        return ScalarWeight(lambda x: self.func(x) ** s, self.dim, self.anchors)

    @classmethod
    def radial_power(cls, exponent, anchor=(0.0, 0.0)):
        a = np.asarray(anchor, float)
        return cls(lambda x: np.sqrt(np.sum((x - a) ** 2, axis=1)) ** exponent,
                   len(a), [tuple(a)])


def condition_product(field, x):
    """``|M(x)| |M(x)^{-1}|`` at a single point, flagged against ``lambda_bound``."""
    m = field(np.atleast_2d(x))[0]
    value = float(condition_numbers(m))
    return ConditionReport(value, field.lambda_bound, value > field.lambda_bound * (1 + 1e-9))


def scalar_weight(field, x):
    """``omega(x) = |M(x)|``; vectorized over rows of ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = spectral_norm(field(np.atleast_2d(x)))
    return float(out[0]) if single else out


def log_values(weight, points):
    """Pointwise logarithm of a matrix field or a scalar weight."""
    vals = np.asarray(weight(points), dtype=float)
    if vals.ndim == 1:
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise DegenerateQuadratureError("scalar weight not positive and finite at nodes")
        return np.log(vals)
    return matrix_log(vals)


def log_mean(weight, ball, quad=None):
    """Logarithmic mean ``exp(mean_B log w)`` for a matrix field or scalar weight."""
    nodes = ball_nodes(ball, quad, getattr(weight, "anchors", ()))
    mean_log = np.mean(log_values(weight, nodes.points), axis=0)
    if np.ndim(mean_log) == 0:
        return float(np.exp(mean_log))
    return matrix_exp(mean_log)


class RandomSmoothField(MatrixWeightField):
    """``M(x) = exp(S(x))`` with ``S`` a seeded random trigonometric symmetric field.

    Each entry of ``S`` is a sum of ``modes`` plane waves with frequencies up
    to ``max_frequency``; ``amplitude`` bounds the spectral norm of ``S``, so
    the condition product is at most ``exp(4 amplitude)``.
    """

    family_tag = "random-smooth"

    def __init__(self, seed, amplitude=0.5, modes=3, max_frequency=3.0):
        rng = np.random.default_rng(seed)
        self.seed, self.amplitude = seed, float(amplitude)
        self.modes, self.max_frequency = int(modes), float(max_frequency)
        self._k = rng.uniform(-max_frequency, max_frequency, size=(3, modes, 2))
        self._phase = rng.uniform(0.0, 2 * np.pi, size=(3, modes))
        c = rng.normal(size=(3, modes))
        # |S| <= |s11| + |s22| + |s12| <= sum of coefficient magnitudes
        self._coef = c * amplitude / np.sum(np.abs(c))
        super().__init__(2, float(np.exp(4 * self.amplitude)))

    def _evaluate(self, x):
        waves = np.sin(np.einsum("emd,nd->nem", self._k, x) + self._phase)
        s = np.sum(waves * self._coef, axis=-1)
        S = np.empty((len(x), 2, 2))
        S[:, 0, 0], S[:, 1, 1] = s[:, 0], s[:, 1]
        S[:, 0, 1] = S[:, 1, 0] = s[:, 2]
        return matrix_exp(S)

    def metadata(self):
        meta = super().metadata()
        meta.update(seed=self.seed, amplitude=self.amplitude, modes=self.modes,
                    max_frequency=self.max_frequency)
        return meta
