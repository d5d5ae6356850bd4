"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from .errors import DomainError, InvalidInputError, NotPositiveDefiniteError

SYM_TOL = 1e-12
P_MIN = 1.0 + 1e-6


def check_finite(a, name="input"):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def check_points(x, dim=2):
    """Return ``x`` as a float array of shape (N, dim)."""
    x = check_finite(x, "points")
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != dim:
        raise InvalidInputError(f"points must have shape (N, {dim}), got {x.shape}")
    return x


def check_symmetric(m, tol=SYM_TOL, name="matrix"):
    """Validate a (batch of) square symmetric matrices and return it symmetrized."""
    m = check_finite(m, name)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise InvalidInputError(f"{name} must be square, got shape {m.shape}")
    mt = np.swapaxes(m, -1, -2)
    scale = np.max(np.abs(m)) if m.size else 0.0
    if np.max(np.abs(m - mt), initial=0.0) > tol * max(scale, 1e-300):
        raise InvalidInputError(f"{name} is not symmetric")
    return 0.5 * (m + mt)


def check_spd(m, tol=SYM_TOL, name="matrix"):
    """Validate symmetric positive definite input (single matrix or batch)."""
    from .matrixweight import eigh_jacobi

    m = check_symmetric(m, tol, name)
    w, _ = eigh_jacobi(m)
    if np.any(w[..., 0] <= 0.0):
        raise NotPositiveDefiniteError(f"{name} is not positive definite")
    return m


def check_exponent(p, name="p"):
    """Exponents must satisfy ``p >= 1 + 1e-6`` and be finite."""
    if not isinstance(p, numbers.Real) or not np.isfinite(p):
        raise InvalidInputError(f"{name} must be a finite real number")
    if p < P_MIN:
        raise InvalidInputError(f"{name} must exceed 1 (got {p})")
    return float(p)


def check_nonnegative(t, name="t"):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError(f"{name} must be nonnegative")
    return t


def check_epsilon(eps, name="epsilon"):
    if not isinstance(eps, numbers.Real) or not 0.0 < eps <= 1.0:
        raise DomainError(f"{name} must lie in (0, 1], got {eps}")
    return float(eps)


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
