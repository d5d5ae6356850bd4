from math import atan, pi

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wplap.errors import CoverageError, DomainError, InvalidInputError, MeshError
from wplap.geometry import (Chart, ball_image_containment, corner_domain, corner_interior_angle,
                            flatten_jacobian, flatten_map, half_plane_domain, lipschitz_params,
                            measure_density, polygon_disk_area, polygon_domain, rectangle_domain,
                            unflatten_map, verify_charts)
from wplap.mesh import Mesh, disk_mesh, mesh_generate, unit_square_mesh

SAWTOOTH = [(0, 0), (0.25, 0.075), (0.5, 0), (0.75, 0.075), (1, 0), (1, 1), (0, 1)]
L_SHAPE = [(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)]


def test_lipschitz_half_plane():
    assert lipschitz_params(half_plane_domain()) == 0.0


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.5, 1.0])
def test_lipschitz_corner(eps):
    dom = corner_domain(eps)
    assert lipschitz_params(dom) == pytest.approx(eps, abs=1e-14)
    assert dom.delta == eps and dom.R == 1.0


def test_lipschitz_sawtooth_interior_vertices():
    dom = polygon_domain(SAWTOOTH, edge_kinds=["boundary"] * 4 + ["model"] * 3)
    inner = [c.max_slope for c in dom.charts if 0 < c.anchor[0] < 1 and c.anchor[1] < 0.5]
    assert np.allclose(inner, 0.3)
    assert lipschitz_params(dom) >= 0.3


def test_lipschitz_coverage_error():
    dom = corner_domain(0.2)
    with pytest.raises(CoverageError):
        lipschitz_params(dom, R=2.0)


def test_corner_epsilon_range():
    for bad in (0.0, -0.1, 1.0001):
        with pytest.raises(InvalidInputError):
            corner_domain(bad)
    with pytest.raises(DomainError):
        corner_domain(0.5, chords=1)


@pytest.mark.parametrize("eps", [0.1, 0.5, 1.0])
def test_corner_angle_and_area(eps):
    dom = corner_domain(eps, chords=512)
    angle = corner_interior_angle(eps)
    assert angle == pytest.approx(pi + 2 * atan(eps), abs=1e-15)
    assert dom.interior_angle(0) == pytest.approx(angle, abs=1e-12)
    # circular sector of opening angle, minus chord losses
    assert dom.area == pytest.approx(angle / 2, rel=1e-4)
    assert dom.area < angle / 2


@pytest.mark.parametrize("dom", [half_plane_domain(), corner_domain(0.3), corner_domain(1.0)],
                         ids=["half-plane", "corner-0.3", "corner-1"])
def test_chart_graph_agrees_with_domain(dom):
    assert verify_charts(dom, n=3000, rng=0) == 0


def test_flatten_roundtrip_and_jacobian():
    chart = corner_domain(0.4).charts[0]
    rng = np.random.default_rng(0)
    y = rng.uniform(-1, 1, (500, 2))
    assert np.allclose(unflatten_map(chart, flatten_map(chart, y)), y, atol=1e-15)
    jac = flatten_jacobian(chart, y)
    assert np.allclose(np.linalg.det(jac), 1.0)
    # boundary maps to the flat line
    s = np.linspace(-1, 1, 41)
    on = np.stack([s, chart.psi(s)], axis=1)
    assert np.allclose(flatten_map(chart, on)[:, 1], 0.0)


def test_flatten_jacobian_matches_fd():
    chart = Chart((0.0, 0.0), pi / 2, ((-1.0, 0.2), (0.1, -0.1), (1.0, 0.3)), 1.0)
    y = np.array([[-0.5, 0.3], [0.6, -0.2]])
    h = 1e-7
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (flatten_map(chart, y + e) - flatten_map(chart, y - e)) / (2 * h)
        assert np.allclose(flatten_jacobian(chart, y)[:, :, k], fd, atol=1e-7)


@given(st.floats(0.01, 1.0), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(1e-3, 0.5))
def test_ball_image_containment(eps, cx, cy, r):
    # the flattening is bi-Lipschitz with constant <= 1 + slope, so for
    # slopes <= 1 the image of a ball sits between the half and double balls
    chart = corner_domain(eps, chords=8).charts[0]
    inner, outer = ball_image_containment(chart, (cx, cy), r)
    assert inner and outer


def test_chart_validation():
    with pytest.raises(InvalidInputError):
        Chart((0, 0), 0.0, ((0.0, 0.0),), 1.0)
    with pytest.raises(InvalidInputError):
        Chart((0, 0), 0.0, ((0.0, 0.0), (1.0, 0.0)), -1.0)


def test_polygon_disk_area_exact():
    sq = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    assert polygon_disk_area(sq, (0, 0), 0.5) == pytest.approx(pi * 0.25, abs=1e-14)
    assert polygon_disk_area(sq, (0, 0), 10.0) == pytest.approx(4.0, abs=1e-12)
    assert polygon_disk_area(sq, (1, 0), 0.5) == pytest.approx(pi * 0.125, abs=1e-14)
    assert polygon_disk_area(sq, (1, 1), 0.5) == pytest.approx(pi * 0.0625, abs=1e-14)


@pytest.mark.parametrize("dom", [corner_domain(1.0), corner_domain(0.1), half_plane_domain()],
                         ids=["corner-1", "corner-0.1", "half-plane"])
def test_measure_density(dom):
    rep = measure_density(dom, n_balls=2000, mc_points=256, rng=1)
    assert rep.ok
    for kind, _, _, est, exact in rep.exact_subset:
        assert abs(est - exact) < 0.15


# meshes

def test_unit_square_mesh_counts():
    m = mesh_generate(rectangle_domain(), 0.5)
    assert m.n_triangles == 8 and m.n_nodes == 9
    assert m.is_conforming()
    assert m.areas.sum() == pytest.approx(1.0)
    assert unit_square_mesh(2).n_triangles == 8


def test_corner_mesh_quality():
    dom = corner_domain(1.0)
    m = mesh_generate(dom, 0.1)
    assert m.min_angle() >= 20.0
    assert m.areas.sum() == pytest.approx(dom.area, rel=1e-9)
    assert np.any(np.all(np.isclose(m.nodes, 0.0), axis=1))


def test_refinement_ratio_l_shape():
    dom = polygon_domain(L_SHAPE)
    n1 = mesh_generate(dom, 0.05).n_triangles
    n2 = mesh_generate(dom, 0.025).n_triangles
    assert 0.8 * 4 <= n2 / n1 <= 1.2 * 4


def test_graded_mesh_refines_near_anchor():
    # coarse arc so boundary chords do not dominate the size far away
    dom = corner_domain(0.5, chords=32)
    m = mesh_generate(dom, 0.15, grading=0.5)
    d = np.linalg.norm(m.centroids, axis=1)
    bands = [np.sqrt(m.areas[(d > a) & (d < b)]).mean() for a, b in [(0, .1), (.1, .3), (.3, .6)]]
    assert bands[0] < bands[1] < bands[2]
    with pytest.raises(InvalidInputError):
        mesh_generate(dom, 0.1, grading=1.5)
    with pytest.raises(InvalidInputError):
        mesh_generate(dom, -0.1)


def test_mesh_text_roundtrip():
    m = disk_mesh(1.0, rings=3, sectors=6)
    back = Mesh.from_text(m.to_text())
    assert np.array_equal(back.nodes, m.nodes)
    assert np.array_equal(back.triangles, m.triangles)
    assert np.array_equal(back.boundary, m.boundary)


def test_mesh_rejects_bad_input():
    with pytest.raises(MeshError):
        Mesh.from_text("garbage")
    with pytest.raises(MeshError):
        Mesh.from_text("3 1\n0 0 1\n1 0 1\n0 1 1\n")


def test_mesh_locate_interpolate():
    m = unit_square_mesh(4)
    u = 2 * m.nodes[:, 0] - m.nodes[:, 1]
    pts = np.array([[0.3, 0.7], [0.9, 0.1], [2.0, 2.0]])
    val = m.interpolate(u, pts)
    assert np.allclose(val[:2], [2 * 0.3 - 0.7, 2 * 0.9 - 0.1])
    assert np.isnan(val[2])
    assert np.allclose(m.gradient(u), [2.0, -1.0])
