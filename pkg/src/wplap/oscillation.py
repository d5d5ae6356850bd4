"""Sampled-ball estimators for log-BMO seminorms, Muckenhoupt brackets and
related per-ball comparison quantities.

The supremum over all balls is not computable. Every estimator here
evaluates a finite, deterministic family of balls and reports the per-ball
values together with their maximum, which is a lower bound for the true
supremum.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError, QuadratureOverflowError
from .matrixweight import (Ball, MatrixWeightField, QuadratureSpec, ball_nodes,
                           log_values, matrix_exp, matrix_inv, spectral_norm, sym_norm)
from .validation import check_exponent, check_random_state

__all__ = [
    "BallSampler", "OscillationReport", "LogWeakestVerdict", "LinearControlRecord",
    "bmo_seminorm", "muckenhoupt_constant", "cmp_quantities", "check_log_weakest",
    "check_linear_control", "vanishing_check", "transfer_check", "omegalog_check",
    "john_nirenberg_means",
]


@dataclass
class BallSampler:
    """Deterministic family of balls with radius at most ``max_radius``.

    ``region`` is a domain (anything with ``bbox`` and ``contains``) or a box
    ``(x0, x1, y0, y1)``. Centers are a ``grid x grid`` lattice over the box
    plus ``n_random`` seeded uniform points (kept only inside a domain);
    radii are ``max_radius / 2^k`` for ``k = 0..levels``.
    """

    region: object
    max_radius: float
    levels: int = 6
    grid: int = 17
    n_random: int = 256
    seed: int = 0
    quad: Optional[QuadratureSpec] = None
    centers: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.max_radius > 0:
            raise InvalidInputError("max_radius must be positive")
        if self.levels < 0 or self.grid < 0 or self.n_random < 0:
            raise InvalidInputError("sampler counts must be nonnegative")
        if self.quad is None:
            domain = None if isinstance(self.region, (tuple, list)) else self.region
            self.quad = QuadratureSpec(domain=domain)

    @classmethod
    def from_balls(cls, balls, quad=None):
        """A sampler that returns exactly ``balls``."""
        balls = list(balls)
        if not balls:
            raise InvalidInputError("empty ball list")
        s = cls(region=(0.0, 0.0, 0.0, 0.0), max_radius=max(b.radius for b in balls),
                levels=0, grid=0, n_random=0, quad=quad or QuadratureSpec())
        s._explicit = balls
        return s

    @property
    def box(self):
        if isinstance(self.region, (tuple, list)):
            return tuple(map(float, self.region))
        lo, hi = self.region.bbox
        return (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))

    @property
    def radii(self):
        return [self.max_radius / 2**k for k in range(self.levels + 1)]

    def center_points(self):
        if self.centers is not None:
            return np.atleast_2d(np.asarray(self.centers, float))
        x0, x1, y0, y1 = self.box
        pts = []
        if self.grid > 0:
            gx, gy = np.meshgrid(np.linspace(x0, x1, self.grid), np.linspace(y0, y1, self.grid),
                                 indexing="ij")
            pts.append(np.stack([gx.ravel(), gy.ravel()], 1))
        if self.n_random > 0:
            rng = check_random_state(self.seed)
            pts.append(rng.uniform([x0, y0], [x1, y1], size=(self.n_random, 2)))
        pts = np.concatenate(pts) if pts else np.empty((0, 2))
        if not isinstance(self.region, (tuple, list)) and len(pts):
            pts = pts[self.region.contains(pts)]
        return pts

    def balls(self):
        if getattr(self, "_explicit", None) is not None:
            return list(self._explicit)
        out = [Ball(c, r) for c in self.center_points() for r in self.radii]
        if not out:
            raise InvalidInputError("sampler produced no balls")
        return out

    def provenance(self):
        explicit = getattr(self, "_explicit", None)
        return {
            "seed": self.seed,
            "grid": self.grid,
            "n_random": self.n_random,
            "levels": self.levels,
            "max_radius": self.max_radius,
            "cells": self.quad.cells,
            "explicit_balls": None if explicit is None else len(explicit),
        }


@dataclass
class OscillationReport:
    quantity: str
    values: np.ndarray
    centers: np.ndarray
    radii: np.ndarray
    clipped: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def running_max(self):
        return np.maximum.accumulate(self.values)

    @property
    def sup(self):
        return float(np.max(self.values))

    @property
    def count(self):
        return len(self.values)

    def argsup(self):
        i = int(np.argmax(self.values))
        return Ball(self.centers[i], self.radii[i])

    def rows(self):
        return [
            {"center": [float(c) for c in self.centers[i]], "radius": float(self.radii[i]),
             "value": float(self.values[i]), "running_max": float(m),
             "clipped": bool(self.clipped[i])}
            for i, m in enumerate(self.running_max)
        ]

    def to_dict(self):
        return {"quantity": self.quantity, "sup": self.sup, "count": self.count,
                "provenance": self.provenance, "balls": self.rows()}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    def summary_row(self):
        return {"quantity": self.quantity, "sup": self.sup, "count": self.count,
                "seed": self.provenance.get("seed")}


def summaries_to_csv(reports):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["quantity", "sup", "count", "seed"])
    w.writeheader()
    for r in reports:
        w.writerow(r.summary_row())
    return buf.getvalue()


def _anchors(*weights):
    out = []
    for w in weights:
        out.extend(getattr(w, "anchors", ()))
    return tuple(out)


def _per_ball(sampler, anchors, func, names):
    """Evaluate ``func(points, ball) -> tuple`` on every sampled ball."""
    balls = sampler.balls()
    vals = np.empty((len(balls), len(names)))
    clipped = np.zeros(len(balls), dtype=bool)
    for i, b in enumerate(balls):
        nodes = ball_nodes(b, sampler.quad, anchors)
        clipped[i] = nodes.clipped
        vals[i] = func(nodes.points, b)
    centers = np.array([b.center for b in balls])
    radii = np.array([b.radius for b in balls])
    prov = sampler.provenance()
    return [OscillationReport(n, vals[:, j].copy(), centers, radii, clipped, dict(prov))
            for j, n in enumerate(names)]


def _log_osc(weight, pts):
    L = log_values(weight, pts)
    # centering on the first node keeps constant fields exactly zero
    L = L - L[0]
    D = L - L.mean(axis=0)
    return float(np.mean(np.abs(D) if D.ndim == 1 else sym_norm(D)))


def bmo_seminorm(weight, sampler):
    """Per-ball mean oscillation of ``log weight``.

    ``weight`` is a :class:`MatrixWeightField` (oscillation measured in the
    spectral norm) or a :class:`ScalarWeight` (absolute value).
    """
    return _per_ball(sampler, _anchors(weight), lambda x, b: (_log_osc(weight, x),),
                     ["log_bmo"])[0]


def _bracket(omega, p, x, b):
    q = p / (p - 1.0)
    w = np.asarray(omega(x), float)
    with np.errstate(over="ignore", divide="ignore"):
        a = np.mean(w**p) ** (1.0 / p)
        c = np.mean(w ** (-q)) ** (1.0 / q)
    v = a * c
    if not np.isfinite(v):
        raise QuadratureOverflowError(f"A_p bracket overflows on {b}", ball=b)
    return v


def muckenhoupt_constant(omega, p, sampler):
    """Per-ball bracket ``(mean w^p)^(1/p) (mean w^(-p'))^(1/p')`` with ``w = omega``."""
    p = check_exponent(p)
    rep = _per_ball(sampler, _anchors(omega), lambda x, b: (_bracket(omega, p, x, b),),
                    ["muckenhoupt"])[0]
    rep.provenance["p"] = p
    return rep


def _cmp(A, x):
    a = np.asarray(A(x), float)
    mu = spectral_norm(a)
    d = sym_norm(a - a.mean(axis=0))
    m = mu.mean()
    return np.sqrt(np.mean(d * d / mu) / m), np.mean(d) / m


def cmp_quantities(A, sampler):
    """Per-ball ``(mu(B)^-1 int |A-<A>|^2 / mu)^(1/2)`` and ``mu(B)^-1 int |A-<A>|``.

    Returns the two reports in that order; ``mu = |A|``.
    """
    return tuple(_per_ball(sampler, _anchors(A), lambda x, b: _cmp(A, x),
                           ["bmo2_mu", "bmo_mu"]))


@dataclass
class LogWeakestVerdict:
    ball: Ball
    lhs: float
    rhs: float
    slack: float

    @property
    def margin(self):
        return self.rhs - self.lhs

    @property
    def holds(self):
        return self.lhs <= self.rhs + self.slack


def check_log_weakest(A, ball, quad=None, slack=1e-8):
    """Both sides of ``mean|log A - <log A>| <= 4 <|A|> <|A^-1|> Q2`` on ``ball``.

    ``Q2`` is the first quantity of :func:`cmp_quantities`.
    """
    x = ball_nodes(ball, quad, _anchors(A)).points
    a = np.asarray(A(x), float)
    lhs = _log_osc(A, x)
    q2, _ = _cmp(A, x)
    rhs = 4.0 * np.mean(spectral_norm(a)) * np.mean(spectral_norm(matrix_inv(a))) * q2
    return LogWeakestVerdict(ball, float(lhs), float(rhs), slack)


@dataclass
class LinearControlRecord:
    ball: Ball
    bmo2_mu: float
    log_osc: float

    @property
    def exact_zero(self):
        return self.log_osc == 0.0

    @property
    def ratio(self):
        return None if self.exact_zero else self.bmo2_mu / self.log_osc


def check_linear_control(A, ball, delta, quad=None, zero_tol=1e-13):
    """Ratio of the ``Q2`` quantity to the log oscillation on a ball of small log oscillation.

    Oscillations below ``zero_tol`` count as the exact-zero case.
    """
    x = ball_nodes(ball, quad, _anchors(A)).points
    osc = _log_osc(A, x)
    if osc > delta:
        raise InvalidInputError(f"log oscillation {osc:.3g} exceeds threshold {delta}")
    q2, _ = _cmp(A, x)
    if osc <= zero_tol:
        osc = 0.0
    return LinearControlRecord(ball, float(q2), float(osc))


def vanishing_check(weight, delta, R, sampler):
    """Sampled test of the (delta, R)-vanishing condition.

    True when the sampled supremum is at most ``delta``. A sample cannot see
    every ball, so ``True`` is necessary but not sufficient.
    """
    if not np.isclose(sampler.max_radius, R, rtol=1e-12, atol=0.0):
        raise InvalidInputError("sampler max_radius must equal R")
    if delta < 0:
        raise InvalidInputError("delta must be nonnegative")
    rep = bmo_seminorm(weight, sampler)
    rep.provenance.update(delta=float(delta), R=float(R))
    return rep.sup <= delta, rep


def transfer_check(M, sampler):
    """Per-ball ``(osc log |M|, osc log M)``; the former is at most twice the latter."""
    omega = M.scalar_weight()
    return tuple(_per_ball(sampler, _anchors(M),
                           lambda x, b: (_log_osc(omega, x), _log_osc(M, x)),
                           ["log_bmo_omega", "log_bmo_matrix"]))


def omegalog_check(omega, p, sampler):
    """Per-ball ``(mean w^p)^(1/p)`` and ``bracket * <w>^log``.

    The first report must not exceed the second, where the bracket is the
    sampled supremum of :func:`muckenhoupt_constant`.
    """
    p = check_exponent(p)
    bracket = muckenhoupt_constant(omega, p, sampler)

    def f(x, b):
        w = np.asarray(omega(x), float)
        return np.mean(w**p) ** (1.0 / p), np.exp(np.mean(np.log(w)))

    lp, logm = _per_ball(sampler, _anchors(omega), f, ["lp_mean", "log_mean"])
    bound = OscillationReport("bracket_times_log_mean", bracket.sup * logm.values, lp.centers,
                              lp.radii, lp.clipped, dict(lp.provenance))
    return lp, bound


def john_nirenberg_means(M, t, sampler):
    """Per-ball ``(mean (|M - <M>^log| / |<M>^log|)^t)^(1/t)`` for a matrix field."""
    if t < 1:
        raise InvalidInputError("t must be >= 1")

    def f(x, b):
        m = np.asarray(M(x), float)
        g = matrix_exp(log_values(M, x).mean(axis=0))
        d = sym_norm(m - g) / spectral_norm(g)
        return (np.mean(d**t) ** (1.0 / t),)

    rep = _per_ball(sampler, _anchors(M), f, [f"jn_mean_t{t:g}"])[0]
    rep.provenance["t"] = t
    return rep


def oscillation_suite(weight, p, sampler):
    """Reports used by the command-line front end for one weight."""
    out = {"log_bmo": bmo_seminorm(weight, sampler)}
    omega = weight.scalar_weight() if isinstance(weight, MatrixWeightField) else weight
    out["muckenhoupt"] = muckenhoupt_constant(omega, p, sampler)
    if isinstance(weight, MatrixWeightField):
        out["bmo2_mu"], out["bmo_mu"] = cmp_quantities(weight.squared(), sampler)
    return out


def radial_log_oscillation(scale=1.0):
    """Mean oscillation of ``scale * log|x|`` over any disk centered at the origin.

    With ``s = |x| / r`` the oscillation is ``int_0^1 |log s + 1/2| 2 s ds = 1/e``.
    """
    return abs(scale) / np.e


def radial_power_mean(gamma, r):
    """Mean of ``|x|^gamma`` over the disk ``B_r(0)`` in the plane (``gamma > -2``)."""
    if gamma <= -2:
        return np.inf
    return 2.0 / (gamma + 2.0) * r**gamma
