import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parsym import GeometryError, TopologyError, UndefinedNormalError
from parsym.geometry import (
    Domain,
    ReflectionFrame,
    ScalarField,
    boundary_normal,
    caps_and_critical_lambda,
    distance_field,
    inner_domain,
    interior_sphere_radius,
    level_set,
    minkowski_check,
    parallel_surface,
    reflect,
)
from parsym.geometry import polygon as pg
from parsym.geometry import shapes

import oracles


@pytest.fixture(scope="module")
def disk():
    return Domain.from_polygon(shapes.disk(), h=1 / 64, name="disk")


@pytest.fixture(scope="module")
def square():
    return Domain.from_polygon(shapes.square(), h=1 / 128, name="square")


@pytest.fixture(scope="module")
def ellipse():
    return Domain.from_polygon(shapes.ellipse(), h=1 / 64, name="ellipse")


# --- polygons and domains ------------------------------------------------


def test_polygon_measures():
    sq = shapes.square(2.0)
    assert pg.signed_area(sq) == pytest.approx(4.0)
    assert pg.perimeter(sq) == pytest.approx(8.0)
    assert np.allclose(pg.centroid(sq), [1, 1])
    assert pg.signed_area(sq[::-1]) == pytest.approx(-4.0)


def test_self_intersecting_polygon_rejected():
    bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], float)
    with pytest.raises(GeometryError):
        Domain.from_polygon(bowtie, h=1 / 64)


def test_clockwise_polygon_is_reoriented():
    d = Domain.from_polygon(shapes.square()[::-1], h=1 / 64)
    assert pg.signed_area(d.polygon) > 0


def test_grid_margin(disk):
    g = disk.grid
    lo, hi = disk.polygon.min(0), disk.polygon.max(0)
    x0, x1, y0, y1 = g.extent
    assert lo[0] - x0 >= 2 * g.h and lo[1] - y0 >= 2 * g.h
    assert x1 - hi[0] >= 2 * g.h and y1 - hi[1] >= 2 * g.h


# --- distance -----------------------------------------------------------------------


def test_distance_at_disk_center(disk):
    assert float(disk.signed_distance(np.zeros((1, 2)))[0]) == pytest.approx(1.0, abs=1e-4)


def test_distance_square_center(square):
    assert float(square.signed_distance(np.array([[0.5, 0.5]]))[0]) == pytest.approx(0.5, abs=1e-12)


def test_distance_ellipse_center_brute_force(ellipse):
    t = np.linspace(0, 2 * np.pi, 200001)
    brute = np.min(np.hypot(2 * np.cos(t), np.sin(t)))
    assert float(ellipse.signed_distance(np.zeros((1, 2)))[0]) == pytest.approx(brute, abs=1e-5)
    assert brute == pytest.approx(1.0)


def test_distance_field_zero_outside(disk):
    d = distance_field(disk)
    assert np.all(d.values[~disk.inside] == 0)
    assert np.all(d.values[disk.inside] >= 0)


def test_distance_field_lipschitz(ellipse):
    sd = ellipse.node_sd
    h = ellipse.h
    assert np.max(np.abs(np.diff(sd, axis=0))) <= h + 2 * h
    assert np.max(np.abs(np.diff(sd, axis=1))) <= h + 2 * h


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-0.99, 0.99), y=st.floats(-0.99, 0.99))
def test_signed_distance_matches_disk_formula(x, y):
    poly = shapes.disk(n=4096)
    d = float(pg.signed_distance(np.array([[x, y]]), poly)[0])
    assert d == pytest.approx(1 - np.hypot(x, y), abs=5e-6)


# --- parallel surfaces ---------------------------------------------------------------


def test_parallel_surface_disk(disk):
    ls = parallel_surface(disk, 0.3)
    assert len(ls) == 1 and ls.closed[0]
    r = np.hypot(*ls.vertices().T)
    assert np.max(np.abs(r - 0.7)) <= 2 * disk.h
    assert ls.enclosed_area() == pytest.approx(np.pi * 0.49, rel=0.03)


def test_parallel_surface_vertices_on_level(ellipse):
    ls = parallel_surface(ellipse, 0.2)
    assert np.max(np.abs(ellipse.signed_distance(ls.vertices()) - 0.2)) <= ellipse.h


def test_parallel_surface_square(square):
    ls = parallel_surface(square, 0.2)
    assert len(ls) == 1
    v = ls.vertices()
    # every vertex of {d = 0.2} lies on the boundary of [0.2, 0.8]^2
    inner = np.minimum.reduce([v[:, 0] - 0.2, 0.8 - v[:, 0], v[:, 1] - 0.2, 0.8 - v[:, 1]])
    assert np.max(np.abs(inner)) <= square.h


def test_parallel_surface_empty_beyond_inradius(disk):
    assert parallel_surface(disk, 1.5).empty


def test_inner_domain_disk(disk):
    G = inner_domain(disk, 0.3)
    assert G.area == pytest.approx(np.pi * 0.49, rel=0.01)


def test_inner_domain_square_area(square):
    G = inner_domain(square, 0.2)
    assert G.area == pytest.approx(0.36, rel=0.01)


def test_inner_domain_dumbbell_pinches_off():
    D = Domain.from_polygon(shapes.dumbbell(), h=1 / 64, name="dumbbell")
    with pytest.raises(TopologyError):
        inner_domain(D, 0.2)


def test_minkowski_disk(disk):
    G = inner_domain(disk, 0.3)
    assert minkowski_check(G, 0.3, disk) <= 2 * disk.h


def test_minkowski_square_corners(square):
    G = inner_domain(square, 0.2)
    # the dilation rounds the corners: distance (sqrt 2 - 1) * 0.2
    assert minkowski_check(G, 0.2, square) > 2 * square.h


def test_minkowski_rounded_square():
    D = Domain.from_polygon(shapes.rounded_square(1.0, 0.3), h=1 / 128)
    G = inner_domain(D, 0.2)
    assert minkowski_check(G, 0.2, D) <= 2 * D.h


@pytest.mark.parametrize("R", [0.6, 1.0])
def test_minkowski_property_on_smooth_domains(R):
    D = Domain.from_polygon(shapes.stadium(1.0, R / 2), h=1 / 96)
    for delta in (0.1, 0.2):
        if delta < R / 2:
            assert minkowski_check(inner_domain(D, delta), delta, D) <= 2 * D.h


# --- normals and interior radii ------------------------------------------------------------


def test_interior_radius_disk():
    G = Domain.from_polygon(shapes.disk(0.7, n=1024), h=1 / 128)
    for t in np.linspace(0, 2 * np.pi, 5, endpoint=False):
        x0 = 0.7 * np.array([np.cos(t), np.sin(t)])
        assert interior_sphere_radius(G, x0) == pytest.approx(0.7, abs=2 * G.h)


def test_interior_radius_ellipse_major_axis_end():
    G = Domain.from_polygon(shapes.ellipse(), h=1 / 128)
    r = interior_sphere_radius(G, np.array([2.0, 0.0]))
    assert r == pytest.approx(oracles.ellipse_normal_radius(2, 1), abs=5 * G.h)


def test_interior_radius_ellipse_minor_axis_end():
    G = Domain.from_polygon(shapes.ellipse(), h=1 / 128)
    # the largest disc touching (0, 1) is the inscribed disc of radius b = 1
    assert interior_sphere_radius(G, np.array([0.0, 1.0])) == pytest.approx(1.0, abs=5 * G.h)


def test_interior_radius_square_side():
    G = Domain.from_polygon(shapes.square(0.6), h=1 / 128)
    assert interior_sphere_radius(G, np.array([0.3, 0.0])) == pytest.approx(0.3, abs=2 * G.h)


def test_normal_undefined_at_corner():
    G = Domain.from_polygon(shapes.square(), h=1 / 64)
    with pytest.raises(UndefinedNormalError):
        boundary_normal(G, np.array([0.0, 0.0]))


def test_inward_normal_disk(disk):
    foot, nu = boundary_normal(disk, np.array([1.0, 0.0]))
    assert np.allclose(nu, [-1, 0], atol=1e-3)


# --- reflections ------------------------------------------------------------------------------


def test_reflect_point():
    fr = ReflectionFrame((1, 0), 0.0)
    assert np.allclose(reflect(np.array([1.0, 0.0]), fr), [-1, 0])
    on = np.array([0.0, 0.7])
    assert np.allclose(reflect(on, fr), on)


def test_frame_is_unit():
    fr = ReflectionFrame((3.0, 4.0), 1.0)
    assert abs(np.hypot(*fr.xi) - 1) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(theta=st.floats(0, 2 * np.pi), lam=st.floats(-2, 2), x=st.floats(-5, 5), y=st.floats(-5, 5))
def test_reflection_involution_points(theta, lam, x, y):
    fr = ReflectionFrame.from_angle(theta, lam)
    p = np.array([[x, y]])
    assert np.max(np.abs(fr.apply(fr.apply(p)) - p)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(theta=st.floats(0, 2 * np.pi), lam=st.floats(-2, 2), x=st.floats(-5, 5), y=st.floats(-5, 5))
def test_reflection_is_isometry_fixing_line(theta, lam, x, y):
    fr = ReflectionFrame.from_angle(theta, lam)
    p = np.array([x, y])
    q = fr.apply(p)
    assert fr.side(q) == pytest.approx(-fr.side(p), abs=1e-10)


def test_reflect_field_twice(disk):
    u = ScalarField.from_function(disk, lambda x, y: np.cos(x) * np.exp(y))
    fr = ReflectionFrame.from_angle(0.3, 0.05)
    uu = reflect(reflect(u, fr), fr)
    m = uu.mask & disk.inside
    assert np.max(np.abs(uu.values[m] - u.values[m])) <= 2 * disk.h**2 * 10


def test_reflect_domain():
    D = Domain.from_polygon(shapes.square(), h=1 / 64)
    R = reflect(D, ReflectionFrame((1, 0), 0.0))
    assert R.area == pytest.approx(1.0)
    assert R.polygon[:, 0].max() == pytest.approx(0.0)


# --- moving plane sweep -------------------------------------------------------------------------


def test_caps_disk_symmetric():
    G = Domain.from_polygon(shapes.disk(), h=1 / 64)
    for th in (0.0, 0.7, 2.0):
        cc = caps_and_critical_lambda(G, (np.cos(th), np.sin(th)))
        assert cc.case == "symmetric"
        assert abs(cc.lambda_star) <= G.h


def test_caps_square_symmetric_at_midline():
    G = Domain.from_polygon(shapes.square(), h=1 / 128)
    cc = caps_and_critical_lambda(G, (1.0, 0.0))
    assert cc.case == "symmetric"
    assert cc.lambda_star == pytest.approx(0.5, abs=2 * G.h)


def test_caps_egg_not_symmetric():
    G = Domain.from_polygon(shapes.egg(), h=1 / 64)
    cc = caps_and_critical_lambda(G, (1.0, 0.0))
    assert cc.case in ("tangency", "orthogonality", "ambiguous")
    assert cc.P is not None or cc.Q is not None


def test_caps_requires_resolution():
    G = Domain.from_polygon(shapes.disk(), h=1 / 16)
    with pytest.raises(Exception):
        caps_and_critical_lambda(G, (1.0, 0.0))


def test_lambda_star_monotone_under_enlargement():
    small = Domain.from_polygon(shapes.disk(0.5), h=1 / 128)
    big = Domain.from_polygon(shapes.disk(0.5, center=(0.2, 0.0)), h=1 / 128)
    # shifting along xi enlarges the sweep region; lambda* cannot decrease
    a = caps_and_critical_lambda(small, (1.0, 0.0)).lambda_star
    b = caps_and_critical_lambda(big, (1.0, 0.0)).lambda_star
    assert b >= a - 1e-12


def test_level_set_of_linear_field():
    D = Domain.from_polygon(shapes.square(), h=1 / 64)
    g = D.grid
    vals = g.nodes[..., 0]
    ls = level_set(vals, g, 0.3)
    assert np.allclose(ls.vertices()[:, 0], 0.3, atol=1e-12)
