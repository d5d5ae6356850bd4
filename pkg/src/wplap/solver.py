"""P1 finite elements for the weighted p-Laplace Dirichlet problem.

Find ``u`` vanishing on the boundary with

    int |M grad u|^(p-2) M^2 grad u . grad phi = int |M F|^(p-2) M^2 F . grad phi

for every test function ``phi``. The weight is sampled once per element at
the centroid. ``p = 2`` is a sparse SPD linear solve; other exponents
minimize the convex energy

    (1/p) int |M grad v|^p - int |M F|^(p-2) M F . M grad v

by Newton's method with Armijo backtracking on a regularized energy
``(1/p)(reg^2 + |M grad v|^2)^(p/2)``, stepping the regularization down a
ladder.
"""

import logging
from dataclasses import dataclass, field, asdict
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (AssemblyError, ConvergenceError, InconsistencyError, InvalidInputError,
                     StallError)
from .matrixweight import eigh_jacobi
from .orlicz import field_a_map
from .validation import check_exponent

logger = logging.getLogger(__name__)

DIRECT_LIMIT = 200_000


@dataclass
class DiscreteScalarField:
    mesh: object
    values: np.ndarray
    zero_boundary: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError("one value per mesh node expected")
        if self.zero_boundary and np.any(self.values[self.mesh.boundary] != 0.0):
            raise ValueError("boundary values must vanish")

    def gradient(self):
        return DiscreteVectorField(self.mesh, self.mesh.gradient(self.values))


@dataclass
class DiscreteVectorField:
    mesh: object
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.shape != (self.mesh.n_triangles, 2):
            raise ValueError("one 2-vector per triangle expected")

    @classmethod
    def from_function(cls, mesh, func):
        """Sample ``func(points) -> (N, 2)`` at element centroids."""
        return cls(mesh, np.asarray(func(mesh.centroids), dtype=float))

    def norms(self):
        return np.linalg.norm(self.vectors, axis=1)


@dataclass
class SolveConfig:
    p: float = 2.0
    tol: float = 1e-10
    max_iter: int = 100
    ladder: Tuple[float, ...] = (1e-2, 1e-4, 1e-6, 0.0)
    line_search: bool = True
    clamp: Optional[Tuple[float, float]] = None
    armijo: float = 1e-4
    rung_tol: float = 1e-6

    def __post_init__(self):
        self.p = check_exponent(self.p)
        self.ladder = tuple(float(r) for r in self.ladder)
        if self.tol <= 0 or self.max_iter < 1:
            raise InvalidInputError("tolerance and iteration limit must be positive")
        if any(b >= a for a, b in zip(self.ladder, self.ladder[1:])) or min(self.ladder) < 0:
            raise InvalidInputError("regularization ladder must be decreasing and nonnegative")


@dataclass
class SolveReport:
    p: float
    rungs: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    final_residual: float = 0.0
    energy: float = 0.0
    energy_history: list = field(default_factory=list)
    converged: bool = False
    clamp: Optional[Tuple[float, float]] = None

    def to_dict(self):
        return asdict(self)


def element_weights(mesh, M, clamp=None):
    """``M`` at element centroids, optionally with ``|M|`` clamped into ``clamp``."""
    m = np.asarray(M(mesh.centroids), dtype=float)
    if not np.all(np.isfinite(m)):
        bad = int(np.argmax(~np.all(np.isfinite(m), axis=(1, 2))))
        raise AssemblyError(f"weight not finite at centroid of element {bad}", element=bad)
    w, _ = eigh_jacobi(m)
    if np.any(w[:, 0] <= 0):
        bad = int(np.argmax(w[:, 0] <= 0))
        raise AssemblyError(f"weight not positive definite on element {bad}", element=bad)
    if clamp is not None:
        lo, hi = clamp
        om = w[:, -1]
        m = m * (np.clip(om, lo, hi) / om)[:, None, None]
    return m


def _check_mesh(mesh):
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        bad = int(np.argmax(areas <= 0))
        raise AssemblyError(f"degenerate element {bad}", element=bad)


def assemble_stiffness(mesh, A):
    """Global matrix of ``int A grad phi_i . grad phi_j`` with per-element ``A`` (T, 2, 2)."""
    G = mesh.basis_gradients()
    local = mesh.areas[:, None, None] * np.einsum("tid,tde,tje->tij", G, A, G)
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_load(mesh, flux):
    """Vector of ``int flux . grad phi_i`` for per-element ``flux`` (T, 2)."""
    G = mesh.basis_gradients()
    local = mesh.areas[:, None] * np.einsum("tid,td->ti", G, flux)
    b = np.zeros(mesh.n_nodes)
    np.add.at(b, mesh.triangles, local)
    return b


class _Factor:
    """Sparse SPD solver: LU below ``DIRECT_LIMIT`` unknowns, Jacobi-CG above."""

    def __init__(self, K, rtol=1e-12):
        self.K = K.tocsc()
        self.rtol = rtol
        self.direct = K.shape[0] < DIRECT_LIMIT
        if self.direct:
            self.lu = spla.splu(self.K)
        else:
            d = K.diagonal()
            self.prec = spla.LinearOperator(K.shape, matvec=lambda x: x / d)

    def solve(self, b):
        if self.direct:
            return self.lu.solve(b)
        x, info = spla.cg(self.K, b, rtol=self.rtol, M=self.prec, maxiter=20 * len(b))
        if info != 0:
            raise ConvergenceError("conjugate gradients did not converge")
        return x


def solve_linear(mesh, A, F):
    """Galerkin solution of ``-div(A grad u) = -div(A F)`` with zero boundary values.

    ``A`` is a :class:`~wplap.matrixweight.MatrixWeightField` (the diffusion
    matrix itself, not its square root) or a per-element array (T, 2, 2).
    """
    _check_mesh(mesh)
    Ae = element_weights(mesh, A) if callable(A) else np.asarray(A, float)
    Fv = F.vectors if isinstance(F, DiscreteVectorField) else np.asarray(F, float)
    K = assemble_stiffness(mesh, Ae)
    b = assemble_load(mesh, np.einsum("tij,tj->ti", Ae, Fv))
    free = ~mesh.boundary
    u = np.zeros(mesh.n_nodes)
    if np.any(b[free] != 0):
        u[free] = _Factor(K[free][:, free]).solve(b[free])
    return DiscreteScalarField(mesh, u)


def galerkin_residual(mesh, A, F, u):
    """Interior residual vector of the linear weak form."""
    Ae = element_weights(mesh, A) if callable(A) else np.asarray(A, float)
    Fv = F.vectors if isinstance(F, DiscreteVectorField) else np.asarray(F, float)
    g = mesh.gradient(u.values if isinstance(u, DiscreteScalarField) else u)
    r = assemble_load(mesh, np.einsum("tij,tj->ti", Ae, g - Fv))
    return r[~mesh.boundary]


class _PLaplaceProblem:
    def __init__(self, mesh, Me, Fv, p):
        self.mesh, self.Me, self.p = mesh, Me, p
        self.G = mesh.basis_gradients()
        self.area = mesh.areas
        self.free = ~mesh.boundary
        self.eta_F = np.einsum("tij,tj->ti", Me, Fv)
        self.b = assemble_load(mesh, field_a_map(p, Me, Fv))
        lap = assemble_stiffness(mesh, np.broadcast_to(np.eye(2), (mesh.n_triangles, 2, 2)))
        self.lap = _Factor(lap[self.free][:, self.free])

    def eta(self, u):
        return np.einsum("tij,tj->ti", self.Me, self.mesh.gradient(u))

    def energy(self, u, reg):
        s = reg * reg + np.sum(self.eta(u) ** 2, axis=1)
        return float(np.sum(self.area * s ** (self.p / 2) / self.p) - self.b @ u)

    def gradient(self, u, reg):
        eta = self.eta(u)
        s = reg * reg + np.sum(eta**2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(s > 0, s ** ((self.p - 2) / 2), 0.0)
        flux = np.einsum("tji,tj->ti", self.Me, a[:, None] * eta)
        return (assemble_load(self.mesh, flux) - self.b)[self.free]

    def hessian(self, u, reg):
        eta = self.eta(u)
        s = reg * reg + np.sum(eta**2, axis=1)
        p = self.p
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(s > 0, s ** ((p - 2) / 2), 0.0)
            c = np.where(s > 0, (p - 2) * s ** ((p - 4) / 2), 0.0)
        inner = a[:, None, None] * np.eye(2) + c[:, None, None] * np.einsum("ti,tj->tij", eta, eta)
        D = np.einsum("tki,tkl,tlj->tij", self.Me, inner, self.Me)
        H = assemble_stiffness(self.mesh, D)
        return H[self.free][:, self.free]

    def dual_norm(self, r):
        return float(np.sqrt(max(r @ self.lap.solve(r), 0.0)))


def solve_plaplace(mesh, M, F, config=None):
    """Minimize the discrete weighted p-energy; returns ``(u, SolveReport)``.

    ``M`` is the matrix weight (so the diffusion matrix is ``M^2``). The
    stopping test is the weak-form residual in the dual norm of the discrete
    Laplacian, relative to the same norm of the load.
    """
    config = config or SolveConfig()
    p = config.p
    _check_mesh(mesh)
    Me = element_weights(mesh, M, config.clamp) if callable(M) else np.asarray(M, float)
    Fv = F.vectors if isinstance(F, DiscreteVectorField) else np.asarray(F, float)
    report = SolveReport(p=p, clamp=config.clamp)
    u = np.zeros(mesh.n_nodes)

    prob = _PLaplaceProblem(mesh, Me, Fv, p)
    bnorm = prob.dual_norm(prob.b[prob.free])
    if bnorm == 0.0:
        report.converged = True
        report.energy_history = [0.0]
        return DiscreteScalarField(mesh, u), report

    if p == 2.0:
        ladder = (0.0,)
    else:
        # the unregularized Hessian is singular where grad u = 0 when p < 2
        ladder = tuple(r for r in config.ladder if r > 0 or p >= 2.0) or (1e-6,)
    if p < 2.0:
        # warm-up rungs at the scale of |MF|: Newton overshoots along grad u by
        # 1/(p-1) and crawls when the first rung is far below that scale
        scale = float(np.sqrt(np.sum(prob.area * np.sum(prob.eta_F ** 2, axis=1))
                              / np.sum(prob.area)))
        ladder = tuple(c * scale for c in (1.0, 0.1) if c * scale > ladder[0]) + ladder

    free = prob.free
    # the linear solution is a scale-aware starting point; from zero the
    # regularized Hessian is tiny and the first Newton steps overshoot
    A2 = np.einsum("tij,tjk->tik", Me, Me)
    u = solve_linear(mesh, A2, Fv).values
    total = 0
    for k, reg in enumerate(ladder):
        last = k == len(ladder) - 1
        target = config.tol if last else max(config.tol, config.rung_tol)
        iters = 0
        E = prob.energy(u, reg)
        report.energy_history.append(E)
        while True:
            r = prob.gradient(u, reg)
            res = prob.dual_norm(r) / bnorm
            if res <= target:
                break
            if total >= config.max_iter:
                report.final_residual = res
                report.energy = E
                raise ConvergenceError(f"no convergence in {config.max_iter} Newton steps", report)
            H = prob.hessian(u, reg)
            try:
                d = -spla.splu(H.tocsc()).solve(r)
            except RuntimeError:
                shift = 1e-12 * abs(H.diagonal()).max()
                d = -spla.splu((H + shift * sp.identity(H.shape[0])).tocsc()).solve(r)
            slope = float(r @ d)
            t = 1.0
            du = np.zeros_like(u)
            du[free] = d
            while True:
                E_new = prob.energy(u + t * du, reg)
                if not config.line_search:
                    break
                if E_new <= E + config.armijo * t * slope:
                    break
                # once the predicted decrease is below what the energy can resolve,
                # accept steps that reduce the residual and keep the energy flat
                flat = E_new <= E + 1e-13 * abs(E)
                if abs(t * slope) < 1e-12 * max(1.0, abs(E)) and flat:
                    r_new = prob.gradient(u + t * du, reg)
                    if prob.dual_norm(r_new) < prob.dual_norm(r):
                        break
                t *= 0.5
                if t < 1e-16:
                    report.final_residual = res
                    report.energy = E
                    raise StallError("line search failed to reduce the energy", report)
            u = u + t * du
            E = E_new
            report.energy_history.append(E)
            iters += 1
            total += 1
        report.rungs.append(reg)
        report.iterations.append(iters)
        logger.debug("rung %g: %d Newton steps, residual %.3e", reg, iters, res)

    report.final_residual = res
    report.energy = prob.energy(u, 0.0)
    report.converged = True
    return DiscreteScalarField(mesh, u), report


def solve(mesh, M, F, config=None):
    """Dispatch on ``config.p``: linear path for ``p = 2``, Newton otherwise."""
    config = config or SolveConfig()
    if config.p == 2.0:
        _check_mesh(mesh)
        Me = element_weights(mesh, M, config.clamp) if callable(M) else np.asarray(M, float)
        Fv = F.vectors if isinstance(F, DiscreteVectorField) else np.asarray(F, float)
        u = solve_linear(mesh, np.einsum("tij,tjk->tik", Me, Me), Fv)
        prob = _PLaplaceProblem(mesh, Me, Fv, 2.0)
        bnorm = prob.dual_norm(prob.b[prob.free])
        res = prob.dual_norm(prob.gradient(u.values, 0.0)) / bnorm if bnorm else 0.0
        E = prob.energy(u.values, 0.0)
        return u, SolveReport(p=2.0, rungs=[0.0], iterations=[1], final_residual=res,
                              energy=E, energy_history=[0.0, E], converged=True,
                              clamp=config.clamp)
    return solve_plaplace(mesh, M, F, config)


def weighted_power_integral(mesh, vectors, omega, p):
    """Centroid rule for ``int |v|^p omega^p``; ``omega`` is per element."""
    return float(np.sum(mesh.areas * (np.linalg.norm(vectors, axis=1) * omega) ** p))


def energy_ratio(u, F, M, p):
    """``int |grad u|^p omega^p / int |F|^p omega^p`` with ``omega = |M|``.

    Returns ``(ratio, zero_flag)``; ``F = 0`` gives ``(0.0, True)``.
    """
    mesh = u.mesh
    Me = element_weights(mesh, M) if callable(M) else np.asarray(M, float)
    omega = eigh_jacobi(Me)[0][:, -1]
    Fv = F.vectors if isinstance(F, DiscreteVectorField) else np.asarray(F, float)
    den = weighted_power_integral(mesh, Fv, omega, p)
    num = weighted_power_integral(mesh, mesh.gradient(u.values), omega, p)
    if den == 0.0:
        if num != 0.0:
            raise InconsistencyError("nonzero solution for vanishing datum")
        return 0.0, True
    return num / den, False


def h1_seminorm_error(mesh, u, grad_exact):
    """``||grad u_h - grad u||_{L^2}`` with a 3-point edge-midpoint rule per element."""
    g = mesh.gradient(u.values if isinstance(u, DiscreteScalarField) else u)
    p = mesh.nodes[mesh.triangles]
    err = 0.0
    for i, j in ((0, 1), (1, 2), (2, 0)):
        mid = 0.5 * (p[:, i] + p[:, j])
        err += np.sum(mesh.areas / 3 * np.sum((g - grad_exact(mid)) ** 2, axis=1))
    return float(np.sqrt(err))
