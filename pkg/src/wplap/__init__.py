"""Numerical laboratory for the matrix-weighted p-Laplace Dirichlet problem."""

from .errors import (AssemblyError, ConvergenceError, DegenerateQuadratureError, InvalidInputError,
                     WplapError)
from .matrixweight import (Ball, ConstantField, MatrixWeightField, PowerField, QuadratureSpec,
                           RotatedAnisotropicField, ScalarWeight, SpdMatrix, log_mean, matrix_exp,
                           matrix_log, scalar_weight, spectral_norm)
from .geometry import PolygonalDomain, corner_domain, polygon_domain, rectangle_domain
from .mesh import Mesh, mesh_generate, unit_square_mesh
from .solver import (DiscreteScalarField, DiscreteVectorField, SolveConfig, SolveReport,
                     energy_ratio, solve, solve_linear, solve_plaplace)
from .oscillation import BallSampler, OscillationReport, bmo_seminorm, muckenhoupt_constant
from .analysis import (CornerSolution, GridFunction, corner_exact, cz_ratio, maximal,
                       sharp_maximal, threshold_fit, weighted_lq_norm)

__version__ = "0.1.0"
