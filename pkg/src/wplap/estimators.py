"""scikit-learn style wrappers around the functional API.

The estimators follow the ``fit`` / ``predict`` / ``transform`` conventions
and expose hyper-parameters through ``get_params`` / ``set_params``.
Inputs are meshes, weights and domains rather than feature matrices, so
they are not drop-in pipeline components.
"""

import numpy as np
from sklearn.base import BaseEstimator

from .analysis import linearity_fit, threshold_fit
from .matrixweight import ConstantField, QuadratureSpec
from .oscillation import BallSampler, bmo_seminorm, muckenhoupt_constant
from .solver import SolveConfig, energy_ratio, solve


class PLaplaceSolver(BaseEstimator):
    """Fit = solve the weighted p-Laplace problem on a mesh for a datum ``F``."""

    def __init__(self, p=2.0, weight=None, tol=1e-10, max_iter=100,
                 ladder=(1e-2, 1e-4, 1e-6, 0.0), clamp=None):
        self.p = p
        self.weight = weight
        self.tol = tol
        self.max_iter = max_iter
        self.ladder = ladder
        self.clamp = clamp

    def _weight(self):
        return self.weight if self.weight is not None else ConstantField(np.eye(2))

    def fit(self, mesh, F):
        cfg = SolveConfig(p=self.p, tol=self.tol, max_iter=self.max_iter,
                          ladder=self.ladder, clamp=self.clamp)
        self.mesh_ = mesh
        self.F_ = F
        self.u_, self.report_ = solve(mesh, self._weight(), F, cfg)
        return self

    def predict(self, points):
        """Values of the discrete solution at ``points`` (NaN outside the mesh)."""
        return self.mesh_.interpolate(self.u_.values, points)

    def transform(self, mesh=None):
        """Per-element gradient of the solution."""
        return self.mesh_.gradient(self.u_.values)

    def score(self, mesh=None, F=None):
        """Energy ratio of the fitted solution (higher is not better; for diagnostics)."""
        return energy_ratio(self.u_, self.F_, self._weight(), self.p)[0]


class _SamplerMixin:
    def _sampler(self, region):
        domain = None if isinstance(region, (tuple, list)) else region
        return BallSampler(region, self.max_radius, levels=self.levels, grid=self.grid,
                           n_random=self.n_random, seed=self.seed,
                           quad=QuadratureSpec(cells=self.cells, domain=domain))


class LogBMOEstimator(_SamplerMixin, BaseEstimator):
    """Sampled log-BMO seminorm of a matrix field or scalar weight."""

    def __init__(self, max_radius=1.0, levels=6, grid=17, n_random=256, seed=0, cells=64):
        self.max_radius = max_radius
        self.levels = levels
        self.grid = grid
        self.n_random = n_random
        self.seed = seed
        self.cells = cells

    def fit(self, weight, region=(-1.0, 1.0, -1.0, 1.0)):
        self.report_ = bmo_seminorm(weight, self._sampler(region))
        self.sup_ = self.report_.sup
        return self

    def predict(self, delta):
        """Sampled (delta, max_radius)-vanishing verdict."""
        return self.sup_ <= delta


class MuckenhouptEstimator(_SamplerMixin, BaseEstimator):
    def __init__(self, p=2.0, max_radius=1.0, levels=6, grid=17, n_random=256, seed=0,
                 cells=64):
        self.p = p
        self.max_radius = max_radius
        self.levels = levels
        self.grid = grid
        self.n_random = n_random
        self.seed = seed
        self.cells = cells

    def fit(self, omega, region=(-1.0, 1.0, -1.0, 1.0)):
        self.report_ = muckenhoupt_constant(omega, self.p, self._sampler(region))
        self.sup_ = self.report_.sup
        return self


class CornerThresholdEstimator(BaseEstimator):
    """Fit the integrability threshold for a list of corner slopes."""

    def __init__(self, q_grid=tuple(range(3, 31)), levels=tuple(range(4, 13))):
        self.q_grid = q_grid
        self.levels = levels

    def fit(self, epsilons):
        self.fits_ = [threshold_fit(e, self.q_grid, self.levels) for e in np.ravel(epsilons)]
        self.q_hat_ = np.array([np.nan if f.q_hat is None else f.q_hat for f in self.fits_])
        return self

    def predict(self, epsilons):
        return self.fit(epsilons).q_hat_

    def transform(self, epsilons=None):
        """``1 / (q_hat - 2)`` per fitted slope."""
        return 1.0 / (self.q_hat_ - 2.0)

    def score(self, epsilons=None):
        """R^2 of the through-origin regression of ``1 / (q_hat - 2)`` on ``arctan eps``."""
        return linearity_fit(self.fits_)[1]
