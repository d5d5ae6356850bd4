import numpy as np
import pytest
from hypothesis import given, strategies as st

from wplap.errors import DegenerateQuadratureError, InvalidInputError, NotPositiveDefiniteError
from wplap.matrixweight import (Ball, ConstantField, GridField, PowerField, QuadratureSpec,
                                RandomSmoothField, RotatedAnisotropicField, ScalarWeight, SpdMatrix,
                                ball_nodes, condition_product, eigh_jacobi, log_mean, log_values,
                                matrix_exp, matrix_inv, matrix_log, scalar_weight, spectral_norm,
                                sym_norm)
from conftest import random_spd

# frozen from tests/oracles/compute_oracles.py
POWER_ITERATION_NORM = 4.694282549261636
LOG_MEAN_OFF_ORIGIN = 1.9999999999999998  # exp mean log|x| on B_0.5((2, 0))


def test_eigh_matches_numpy(rng):
    m = np.array([random_spd(rng, 3) for _ in range(50)])
    w, v = eigh_jacobi(m)
    w_ref = np.linalg.eigvalsh(m)
    assert np.allclose(w, w_ref, rtol=1e-13, atol=0)
    recon = np.einsum("bik,bk,bjk->bij", v, w, v)
    assert np.allclose(recon, m, atol=1e-12)


def test_spectral_norm_cases():
    assert spectral_norm(np.eye(2)) == pytest.approx(1.0, abs=1e-15)
    assert spectral_norm(np.diag([2.0, 0.5])) == pytest.approx(2.0, abs=1e-15)
    a = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 1.0]])
    assert spectral_norm(a) == pytest.approx(POWER_ITERATION_NORM, rel=1e-10)


def test_spectral_norm_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        spectral_norm(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_spd_matrix_invariants():
    with pytest.raises(InvalidInputError):
        SpdMatrix([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(InvalidInputError):
        SpdMatrix([[1.0, 0.0], [0.0, -1.0]])
    assert SpdMatrix([[2.0, 0.1], [0.1, 1.0]]).dim == 2


def test_matrix_log_closed_forms():
    assert np.allclose(matrix_log(np.eye(2)), 0.0, atol=1e-15)
    assert np.allclose(matrix_log(np.diag([np.e, np.e**2])), np.diag([1.0, 2.0]), atol=1e-14)
    with pytest.raises(NotPositiveDefiniteError):
        matrix_log(np.diag([1.0, 0.0]))


@pytest.mark.parametrize("cond", [1.0, 10.0, 1e3, 1e6])
def test_exp_log_roundtrip(rng, cond):
    for _ in range(200):
        m = random_spd(rng, 2, cond)
        back = matrix_exp(matrix_log(m))
        assert np.linalg.norm(back - m, 2) <= 1e-10 * np.linalg.norm(m, 2)


def test_condition_product_and_scalar_weight():
    x = np.array([[0.3, -0.2], [4.0, 0.0]])
    assert np.allclose(condition_product(ConstantField(np.eye(2)), x).value, 1.0)
    rep = condition_product(ConstantField(np.diag([4.0, 1.0])), x)
    assert np.allclose(rep.value, 4.0) and not np.any(rep.violated)
    assert np.allclose(condition_product(PowerField(0.7), x).value, 1.0)
    assert np.allclose(scalar_weight(ConstantField(np.eye(2)), x), 1.0)
    assert np.allclose(scalar_weight(ConstantField(np.diag([4.0, 1.0])), x), 4.0)
    assert scalar_weight(PowerField(0.5), [[4.0, 0.0]])[0] == pytest.approx(2.0, abs=1e-14)


def test_condition_violation_flag():
    f = RotatedAnisotropicField(5.0, angle=0.4)
    f.lambda_bound = 2.0
    assert np.all(condition_product(f, [[0.1, 0.2]]).violated)


def test_log_mean_constant_field():
    m0 = np.array([[2.0, 0.3], [0.3, 0.7]])
    out = log_mean(ConstantField(m0), Ball((0.2, 0.1), 0.4))
    assert np.allclose(out, m0, atol=1e-12)


def test_log_mean_radial_oracle():
    val = log_mean(ScalarWeight.radial_power(1.0), Ball((2.0, 0.0), 0.5), QuadratureSpec(cells=256))
    assert val == pytest.approx(LOG_MEAN_OFF_ORIGIN, abs=1e-6)


def test_log_mean_reciprocal(rng):
    w = ScalarWeight(lambda x: np.exp(np.sin(3 * x[:, 0]) + x[:, 1] ** 2))
    inv = ScalarWeight(lambda x: 1.0 / w(x))
    for _ in range(10):
        b = Ball(rng.uniform(-1, 1, 2), rng.uniform(0.1, 1.0))
        assert log_mean(w, b) * log_mean(inv, b) == pytest.approx(1.0, abs=1e-12)


def test_anchor_nodes_dropped_and_degenerate():
    quad = QuadratureSpec(cells=1)  # single node at the center
    with pytest.raises(DegenerateQuadratureError):
        ball_nodes(Ball((0.0, 0.0), 1.0), quad, anchors=[(0.0, 0.0)])
    nodes = ball_nodes(Ball((0.0, 0.0), 1.0), QuadratureSpec(cells=64), anchors=[(0.0, 0.0)])
    assert nodes.dropped == 0  # midpoints avoid an anchor on a cell corner


def test_grid_field_bilinear():
    xs, ys = np.array([0.0, 1.0]), np.array([0.0, 2.0])
    m11 = np.array([[1.0, 2.0], [3.0, 4.0]])
    f = GridField(xs, ys, m11, np.zeros((2, 2)), np.ones((2, 2)))
    assert f([[0.5, 1.0]])[0, 0, 0] == pytest.approx(2.5)
    with pytest.raises(NotPositiveDefiniteError):
        GridField(xs, ys, -m11, np.zeros((2, 2)), np.ones((2, 2)))


def _fields():
    return [ConstantField(np.diag([3.0, 1.0])), PowerField(0.4),
            PowerField(-0.3, base=np.array([[2.0, 0.5], [0.5, 1.0]])),
            RotatedAnisotropicField(4.0, 0.2, twist=1.5), RandomSmoothField(3, amplitude=0.8)]


@pytest.mark.parametrize("field", _fields(), ids=lambda f: f.family_tag)
def test_log_mean_norm_sandwich(field, rng):
    # Lambda^-1 <|M|>^log <= |<M>^log| <= <|M|>^log
    lam = field.lambda_bound
    omega = field.scalar_weight()
    for _ in range(8):
        b = Ball(rng.uniform(-1, 1, 2), rng.uniform(0.05, 0.8))
        quad = QuadratureSpec(cells=32)
        lm = spectral_norm(log_mean(field, b, quad))
        lw = log_mean(omega, b, quad)
        assert lw / lam <= lm * (1 + 1e-9)
        assert lm <= lw * (1 + 1e-9)


@pytest.mark.parametrize("field", _fields(), ids=lambda f: f.family_tag)
def test_log_mean_below_mean(field, rng):
    A = field.squared()
    mu = A.scalar_weight()
    for _ in range(8):
        b = Ball(rng.uniform(-1, 1, 2), rng.uniform(0.05, 0.8))
        quad = QuadratureSpec(cells=32)
        x = ball_nodes(b, quad, A.anchors).points
        assert log_mean(mu, b, quad) <= np.mean(mu(x)) * (1 + 1e-12)


@pytest.mark.parametrize("field", _fields(), ids=lambda f: f.family_tag)
def test_inverse_convexity(field, rng):
    A = field.squared()
    for _ in range(8):
        b = Ball(rng.uniform(-1, 1, 2), rng.uniform(0.05, 0.8))
        x = ball_nodes(b, QuadratureSpec(cells=32), A.anchors).points
        a = A(x)
        diff = matrix_inv(a.mean(axis=0)) - matrix_inv(a).mean(axis=0)
        assert np.max(np.linalg.eigvalsh(diff)) <= 1e-9 * spectral_norm(matrix_inv(a).mean(0))


@pytest.mark.parametrize("field", _fields(), ids=lambda f: f.family_tag)
def test_scalar_weight_squared_is_norm_of_A(field, rng):
    x = rng.uniform(-1, 1, (200, 2))
    w = field.scalar_weight()(x)
    assert np.allclose(w**2, spectral_norm(field.squared()(x)), rtol=1e-10)


def test_log_lipschitz_bound_bulk():
    rng = np.random.default_rng(2024)
    G = np.array([random_spd(rng, 2) for _ in range(10_000)])
    H = np.array([random_spd(rng, 2) for _ in range(10_000)])
    lhs = sym_norm(matrix_log(G) - matrix_log(H))
    rhs = np.maximum(spectral_norm(matrix_inv(G)), spectral_norm(matrix_inv(H))) * sym_norm(G - H)
    assert np.sum(lhs > rhs + 1e-9) == 0


spd_entries = st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, np.pi))


def _spd_from(t):
    a, b, th = t
    c, s = np.cos(th), np.sin(th)
    q = np.array([[c, -s], [s, c]])
    return q @ np.diag(np.exp([a, b])) @ q.T


@given(spd_entries, spd_entries)
def test_log_lipschitz_property(g, h):
    G, H = _spd_from(g), _spd_from(h)
    lhs = sym_norm(matrix_log(G) - matrix_log(H))
    rhs = max(spectral_norm(matrix_inv(G)), spectral_norm(matrix_inv(H))) * sym_norm(G - H)
    assert lhs <= rhs + 1e-9


@given(spd_entries, st.floats(1e-3, 1e3))
def test_log_scaling_property(g, c):
    G = _spd_from(g)
    assert np.allclose(matrix_log(c * G), matrix_log(G) + np.log(c) * np.eye(2), atol=1e-12)


def test_field_is_deterministic(rng):
    f = RandomSmoothField(7)
    x = rng.uniform(-1, 1, (20, 2))
    assert np.array_equal(f(x), f(x))
    assert np.all(condition_product(f, x).value <= f.lambda_bound)


def test_log_values_scalar_rejects_nonpositive():
    with pytest.raises(DegenerateQuadratureError):
        log_values(ScalarWeight(lambda x: x[:, 0]), np.array([[-1.0, 0.0]]))
