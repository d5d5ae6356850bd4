"""Power N-functions, their shifted versions, and the A / V maps.

``phi(t) = t^p / p``. The shifted function ``phi_a`` is quadratic below the
shift ``a`` and follows ``phi`` above it:

    phi_a(t) = a^(p-2) t^2 / 2                 for t <= a
    phi_a(t) = a^p / 2 + (t^p - a^p) / p       for t >  a

The conjugate of a shifted function is again shifted:
``(phi_a)^* = (phi^*)_{phi'(a)}``, which is how ``phi_shifted_conjugate``
evaluates it.
"""

import csv
import io
from dataclasses import dataclass, asdict

import numpy as np

from .validation import check_exponent, check_nonnegative


def conjugate_exponent(p):
    p = check_exponent(p)
    return p / (p - 1.0)


@dataclass(frozen=True)
class PowerNFunction:
    p: float

    def __post_init__(self):
        object.__setattr__(self, "p", check_exponent(self.p))

    @property
    def p_conj(self):
        return conjugate_exponent(self.p)

    def __call__(self, t):
        return phi(self.p, t)

    def derivative(self, t):
        return phi_prime(self.p, t)

    def conjugate(self, t):
        return phi_conjugate(self.p, t)

    def shifted(self, a):
        return ShiftedEval(self.p, a)


@dataclass(frozen=True)
class ShiftedEval:
    p: float
    a: float

    def __post_init__(self):
        object.__setattr__(self, "p", check_exponent(self.p))
        object.__setattr__(self, "a", float(check_nonnegative(self.a, "shift")))

    def __call__(self, t):
        return phi_shifted(self.p, self.a, t)

    def derivative(self, t):
        return phi_shifted_prime(self.p, self.a, t)

    def conjugate(self, t):
        return phi_shifted_conjugate(self.p, self.a, t)


def phi(p, t):
    p = check_exponent(p)
    return check_nonnegative(t) ** p / p


def phi_prime(p, t):
    p = check_exponent(p)
    return check_nonnegative(t) ** (p - 1.0)


def phi_conjugate(p, t):
    q = conjugate_exponent(p)
    return check_nonnegative(t) ** q / q


def phi_shifted(p, a, t):
    p = check_exponent(p)
    a = check_nonnegative(a, "shift")
    t = check_nonnegative(t)
    a, t = np.broadcast_arrays(a, t)
    out = np.empty(np.shape(t))
    low = t <= a
    with np.errstate(divide="ignore", invalid="ignore"):
        out[low] = a[low] ** (p - 2.0) * t[low] ** 2 / 2.0
    hi = ~low
    out[hi] = a[hi] ** p / 2.0 + (t[hi] ** p - a[hi] ** p) / p
    # a = t = 0 with p < 2 gives 0 * inf above
    out[t == 0] = 0.0
    return out[()] if out.ndim == 0 else out


def phi_shifted_prime(p, a, t):
    """``phi_a'(t) = (a v t)^(p-2) t``."""
    p = check_exponent(p)
    a = check_nonnegative(a, "shift")
    t = check_nonnegative(t)
    m = np.maximum(a, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t == 0, 0.0, m ** (p - 2.0) * t)
    return out[()] if np.ndim(out) == 0 else out


def phi_shifted_conjugate(p, a, t):
    """``(phi_a)^*(t)``, evaluated as ``phi^*`` shifted by ``phi'(a)``."""
    p = check_exponent(p)
    return phi_shifted(conjugate_exponent(p), phi_prime(p, a), t)


def _norm(xi):
    return np.sqrt(np.sum(np.asarray(xi, float) ** 2, axis=-1, keepdims=True))


def a_map(p, xi):
    """``A(xi) = |xi|^(p-2) xi`` along the last axis; ``A(0) = 0``."""
    p = check_exponent(p)
    xi = np.asarray(xi, dtype=float)
    r = _norm(xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(r > 0, r ** (p - 2.0) * xi, 0.0)


def v_map(p, xi):
    """``V(xi) = |xi|^((p-2)/2) xi``; ``V(0) = 0``."""
    p = check_exponent(p)
    xi = np.asarray(xi, dtype=float)
    r = _norm(xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(r > 0, r ** ((p - 2.0) / 2.0) * xi, 0.0)


def field_a_map(p, m, xi):
    """``M A(M xi) = |M xi|^(p-2) M^2 xi`` for batched matrices ``m`` and vectors ``xi``."""
    mxi = np.einsum("...ij,...j->...i", m, xi)
    return np.einsum("...ij,...j->...i", m, a_map(p, mxi))


@dataclass
class RatioStats:
    name: str
    p: float
    count: int
    skipped: int
    min: float
    max: float

    def to_row(self):
        return asdict(self)


def ratio_reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(RatioStats.__dataclass_fields__))
    writer.writeheader()
    for r in reports:
        writer.writerow(r.to_row())
    return buf.getvalue()


def _stats(name, p, values, skipped):
    if len(values) == 0:
        return RatioStats(name, p, 0, int(skipped), float("nan"), float("nan"))
    return RatioStats(name, p, int(len(values)), int(skipped),
                      float(np.min(values)), float(np.max(values)))


def monotone_products(p, P, Q):
    """``(A(P) - A(Q)) . (P - Q)`` row-wise."""
    return np.sum((a_map(p, P) - a_map(p, Q)) * (np.asarray(P) - np.asarray(Q)), axis=-1)


def equiv_ratios(p, P, Q):
    """Ratios relating ``A``, ``V`` and the shifted N-function on vector pairs.

    Returns ``(r1, r2)`` as :class:`RatioStats` with
    ``r1 = (A(P)-A(Q)).(P-Q) / |V(P)-V(Q)|^2`` and
    ``r2 = (A(P)-A(Q)).(P-Q) / phi_{|Q|}(|P-Q|)``. Pairs with ``P == Q`` are
    skipped. Raises ``ArithmeticError`` if a numerator is not positive.
    """
    p = check_exponent(p)
    P, Q = np.atleast_2d(np.asarray(P, float)), np.atleast_2d(np.asarray(Q, float))
    diff = np.sqrt(np.sum((P - Q) ** 2, axis=1))
    keep = diff > 0
    P, Q, diff = P[keep], Q[keep], diff[keep]
    num = monotone_products(p, P, Q)
    if np.any(num <= 0):
        raise ArithmeticError("monotonicity of A violated on a sampled pair")
    dv = np.sum((v_map(p, P) - v_map(p, Q)) ** 2, axis=1)
    den2 = phi_shifted(p, np.sqrt(np.sum(Q * Q, axis=1)), diff)
    skipped = int(np.sum(~keep))
    return _stats("A_vs_V", p, num / dv, skipped), _stats("A_vs_phi_shift", p, num / den2, skipped)


def change_of_shift_constants(p, eps, P, Q, t):
    """Smallest ``c`` with ``phi_{|P|}(t) <= c phi_{|Q|}(t) + eps |V(P)-V(Q)|^2`` per sample.

    Diagnostic only; the existence of a uniform ``c_eps`` is what is observed.
    """
    P, Q = np.atleast_2d(P), np.atleast_2d(Q)
    t = np.asarray(t, float)
    lhs = phi_shifted(p, np.linalg.norm(P, axis=1), t)
    slack = eps * np.sum((v_map(p, P) - v_map(p, Q)) ** 2, axis=1)
    den = phi_shifted(p, np.linalg.norm(Q, axis=1), t)
    ok = den > 0
    return _stats(f"change_of_shift(eps={eps})", p, np.maximum(lhs - slack, 0.0)[ok] / den[ok],
                  int(np.sum(~ok)))


def removal_of_shift_constants(p, eps, a, t):
    """Smallest ``c`` with ``phi_a(t) <= eps phi(a) + c eps phi(t / eps)`` per sample."""
    a, t = np.asarray(a, float), np.asarray(t, float)
    lhs = phi_shifted(p, a, t) - eps * phi(p, a)
    den = eps * phi(p, t / eps)
    ok = den > 0
    return _stats(f"removal_of_shift(eps={eps})", p, np.maximum(lhs, 0.0)[ok] / den[ok],
                  int(np.sum(~ok)))


def young_constants(p, eps, s, t, a):
    """Smallest ``c`` with ``s t <= c (phi_a)^*(s) + eps phi_a(t)`` per sample."""
    s, t, a = np.broadcast_arrays(*(np.asarray(v, float) for v in (s, t, a)))
    lhs = s * t - eps * phi_shifted(p, a, t)
    den = phi_shifted_conjugate(p, a, s)
    ok = den > 0
    return _stats(f"young(eps={eps})", p, np.maximum(lhs, 0.0)[ok] / den[ok], int(np.sum(~ok)))


def delta2_exponent(p):
    """Exponent ``d`` with ``phi_a(2t) <= 2^d phi_a(t)`` uniformly in ``a``."""
    return max(2.0, check_exponent(p))
