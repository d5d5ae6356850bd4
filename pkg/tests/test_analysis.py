from math import atan, pi

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wplap.analysis import (CornerSolution, GridFunction, corner_exact, cz_ratio, disk_offsets,
                            fefferman_stein_ratio, fs_corpus, hypothesis_tag, linearity_fit,
                            maximal, random_datum, sharp_maximal, threshold_fit,
                            weighted_lq_norm)
from wplap.errors import InconsistencyError, InvalidInputError, QuadratureOverflowError
from wplap.mesh import unit_square_mesh
from wplap.solver import DiscreteScalarField, DiscreteVectorField


def _grid(seed=0, n=8, exterior=0.0):
    rng = np.random.default_rng(seed)
    return GridFunction(rng.normal(size=(n, n + 2)), (0.0, 0.0), 0.1, exterior)


def _brute(f, rho, sharp):
    """Direct scan over every cell and every whole radius."""
    nx, ny = f.shape
    out = np.zeros(f.shape)
    rmax = int(np.ceil(np.hypot(nx, ny)))
    for i in range(nx):
        for j in range(ny):
            best = 0.0 if sharp else abs(f.values[i, j])
            for r in range(1, rmax + 1):
                vals = []
                for a in range(-r, r + 1):
                    for b in range(-r, r + 1):
                        if a * a + b * b < r * r:
                            ii, jj = i + a, j + b
                            inside = 0 <= ii < nx and 0 <= jj < ny
                            vals.append(f.values[ii, jj] if inside else f.exterior)
                vals = np.array(vals)
                if sharp:
                    m = np.mean(np.abs(vals - vals.mean()) ** rho) ** (1 / rho)
                else:
                    m = np.mean(np.abs(vals) ** rho) ** (1 / rho)
                best = max(best, m)
            out[i, j] = best
    return out


def test_disk_offsets():
    assert len(disk_offsets(1)) == 1
    assert len(disk_offsets(2)) == 9
    assert len(disk_offsets(3)) == 25


@pytest.mark.parametrize("rho", [1.0, 2.0])
@pytest.mark.parametrize("exterior", [0.0, 0.7])
def test_maximal_matches_brute_force(rho, exterior):
    f = _grid(1, 6, exterior)
    assert np.allclose(maximal(f, rho, radii="all").values, _brute(f, rho, False), atol=1e-12)


@pytest.mark.parametrize("rho", [1.0, 2.0])
def test_sharp_maximal_matches_brute_force(rho):
    f = _grid(2, 6, 0.3)
    assert np.allclose(sharp_maximal(f, rho, radii="all").values, _brute(f, rho, True), atol=1e-12)


def test_maximal_dominates_and_constant():
    f = _grid(3, 12)
    assert np.all(maximal(f).values >= np.abs(f.values) - 1e-15)
    c = GridFunction(np.full((5, 5), 2.0), (0, 0), 1.0, exterior=2.0)
    assert np.allclose(maximal(c).values, 2.0)
    assert np.allclose(sharp_maximal(c).values, 0.0, atol=1e-14)
    with pytest.raises(InvalidInputError):
        maximal(f, rho=0.5)


@given(st.integers(0, 100), st.floats(-5, 5), st.floats(0.1, 10))
def test_sharp_invariances(seed, c, s):
    f = _grid(seed, 7)
    base = sharp_maximal(f).values
    assert np.allclose(sharp_maximal(f + c).values, base, atol=1e-10)
    assert np.allclose(sharp_maximal(f * s).values, s * base, rtol=1e-10, atol=1e-12)
    assert np.allclose(sharp_maximal(f * -1.0).values, base, atol=1e-12)
    assert np.all(base <= 2 * maximal(f).values + 1e-12)


@given(st.integers(0, 100), st.floats(0.1, 10))
def test_maximal_homogeneity(seed, s):
    f = _grid(seed, 7)
    assert np.allclose(maximal(f * s).values, s * maximal(f).values, rtol=1e-10)


def test_grid_norms():
    g = GridFunction(np.ones((4, 4)), (0, 0), 0.25)
    assert g.lq_norm(2) == pytest.approx(1.0)
    assert weighted_lq_norm(g, None, 3.0) == pytest.approx(1.0)
    assert weighted_lq_norm(g, lambda x: np.full(len(x), 2.0), 2.0) == pytest.approx(2.0)
    with pytest.raises(InvalidInputError):
        (g + 1.0).lq_norm(2)
    with pytest.raises(InvalidInputError):
        weighted_lq_norm(g, None, 0.5)
    with pytest.raises(QuadratureOverflowError):
        weighted_lq_norm(g * 1e200, None, 4.0)


def test_from_function_sampling():
    g = GridFunction.from_function(lambda x: x[:, 0] + 2 * x[:, 1], (0, 1, 0, 0.5), 4)
    assert g.shape == (4, 2)
    assert g.values[0, 0] == pytest.approx(0.125 + 2 * 0.125)


def test_fs_ratio_properties():
    corpus = fs_corpus(16)
    for name, f in corpus.items():
        for q in (2.0, 4.0):
            rec = fefferman_stein_ratio(f, q)
            assert not rec.degenerate and np.isfinite(rec.ratio) and rec.ratio > 0
            scaled = fefferman_stein_ratio(f * 3.0, q)
            assert scaled.ratio == pytest.approx(rec.ratio, rel=1e-10)
    with pytest.raises(InvalidInputError):
        fefferman_stein_ratio(corpus["cone"] + 1.0, 2.0)
    with pytest.raises(InvalidInputError):
        fefferman_stein_ratio(corpus["cone"], 1.0)


def test_fs_zero_function_degenerate():
    rec = fefferman_stein_ratio(GridFunction(np.zeros((4, 4)), (0, 0), 0.25), 2.0)
    assert rec.degenerate


# corner solution

@pytest.mark.parametrize("eps", [0.2, np.tan(pi / 8), 1.0])
def test_corner_solution_exponents(eps):
    sol = corner_exact(eps)
    assert sol.beta == pytest.approx(atan(eps))
    assert sol.opening == pytest.approx(pi + 2 * atan(eps))
    assert sol.alpha == pytest.approx(pi / (pi + 2 * atan(eps)))
    assert 1.0 / (sol.critical_q - 2.0) == pytest.approx(atan(eps) / pi, rel=1e-12)


def test_corner_solution_boundary_values_and_gradient():
    sol = corner_exact(0.5)
    s = np.linspace(0.05, 1.0, 20)
    left = np.stack([-s, -0.5 * s], 1)
    right = np.stack([s, -0.5 * s], 1)
    assert np.allclose(sol.u(left), 0.0, atol=1e-14)
    assert np.allclose(sol.u(right), 0.0, atol=1e-14)
    rng = np.random.default_rng(0)
    x = rng.uniform([-0.8, 0.1], [0.8, 0.8], (50, 2))
    h = 1e-6
    fd = np.stack([(sol.u(x + [h, 0]) - sol.u(x - [h, 0])) / (2 * h),
                   (sol.u(x + [0, h]) - sol.u(x - [0, h])) / (2 * h)], 1)
    assert np.allclose(sol.grad(x), fd, atol=1e-6)
    r = np.linalg.norm(x, axis=1)
    assert np.allclose(np.linalg.norm(sol.grad(x), axis=1), sol.grad_norm(r))


def test_corner_solution_is_harmonic():
    sol = corner_exact(1.0)
    pts = np.array([[0.3, 0.4], [-0.5, 0.2], [0.1, 0.7]])
    e1 = np.max(np.abs(sol.laplacian_residual(pts, 1e-2)))
    e2 = np.max(np.abs(sol.laplacian_residual(pts, 5e-3)))
    assert e2 < e1 / 3.5 and e2 < 1e-3


def test_corner_lq_closed_form():
    sol = corner_exact(1.0)
    assert sol.lq_power(3.0) == pytest.approx(4 * pi / 9, rel=1e-12)
    assert sol.shell_power_integral(3.0, 1e-12, 1.0, nodes=64) == pytest.approx(4 * pi / 9,
                                                                               rel=1e-6)
    assert sol.lq_power(6.0) == np.inf and sol.critical_q == pytest.approx(6.0)


def test_threshold_examples():
    fit = threshold_fit(1.0, range(3, 31))
    assert 5.5 <= fit.q_hat <= 6.5 and not fit.inconclusive
    assert fit.classification[3.0] == "convergent" and fit.classification[10.0] == "divergent"
    assert fit.to_csv().splitlines()[0] == "epsilon,q,annulus_k,norm,classification"
    low = threshold_fit(1.0, [3, 4, 5])
    assert low.inconclusive and low.q_hat is None
    with pytest.raises(InvalidInputError):
        threshold_fit(1.0001, [3, 4])
    with pytest.raises(InvalidInputError):
        threshold_fit(1.0, [3, 4], levels=[4, 5])


def test_linearity_fit_exact_data():
    fits = [threshold_fit(e, np.arange(3, 41, 0.5)) for e in (0.2, np.tan(pi / 8), 1.0)]
    slope, r2 = linearity_fit(fits)
    assert slope == pytest.approx(1 / pi, rel=0.1) and r2 >= 0.99


# CZ ratio and sweeps

def test_cz_ratio_self_and_zero():
    mesh = unit_square_mesh(6)
    x, y = mesh.nodes.T
    uh = x * (1 - x) * y * (1 - y)
    u = DiscreteScalarField(mesh, uh)
    F = DiscreteVectorField(mesh, mesh.gradient(uh))
    for q in (2.0, 3.0, 8.0):
        assert cz_ratio(u, F, lambda p: 1.0 + p[:, 0], q) == pytest.approx(1.0, abs=1e-14)
    zero = DiscreteVectorField(mesh, np.zeros((mesh.n_triangles, 2)))
    assert cz_ratio(DiscreteScalarField(mesh, np.zeros(mesh.n_nodes)), zero, None, 2.0) == 0.0
    with pytest.raises(InconsistencyError):
        cz_ratio(u, zero, None, 2.0)


def test_hypothesis_tag():
    assert hypothesis_tag(0.01, 0.01, 4.0, 0.1)
    assert not hypothesis_tag(0.01, 0.05, 4.0, 0.1)
    assert not hypothesis_tag(0.05, 0.01, 4.0, 0.1)
    # a large configured threshold cannot admit boundaries steeper than 1/(2n)
    assert hypothesis_tag(0.0, 0.25, 1.0, 2.0) and not hypothesis_tag(0.0, 0.3, 1.0, 2.0)


def test_random_datum_deterministic():
    x = np.random.default_rng(0).uniform(size=(10, 2))
    assert np.array_equal(random_datum(3)(x), random_datum(3)(x))
    assert not np.array_equal(random_datum(3)(x), random_datum(4)(x))
