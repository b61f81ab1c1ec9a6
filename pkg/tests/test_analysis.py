import numpy as np
import pytest

from parsym import EmptyLevelSetError, EstimationError, PreconditionError, TopologyError, make_profile
from parsym.analysis import (
    comparison_property_test,
    discretization_error,
    gradient_bound_check,
    moving_planes_probe,
    oscillation_exponent,
    parallelism_check,
    random_boundary_pair,
)
from parsym.geometry import Domain, ScalarField, inner_domain, shapes
from parsym.solver import minimize

POWER2 = make_profile("power", p=2)
LPP = make_profile("linear-plus-power", a=0.25, p=2)


@pytest.fixture(scope="module")
def disk():
    return Domain.from_polygon(shapes.disk(), h=1 / 64, name="disk")


@pytest.fixture(scope="module")
def disk_sol(disk):
    return minimize(disk, POWER2)


@pytest.fixture(scope="module")
def ellipse():
    return Domain.from_polygon(shapes.ellipse(), h=1 / 64, name="ellipse")


@pytest.fixture(scope="module")
def ellipse_sol(ellipse):
    return minimize(ellipse, POWER2)


# --- parallelism -------------------------------------------------------------------


@pytest.mark.parametrize("frac", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_disk_levels_parallel(disk, disk_sol, frac):
    rep = parallelism_check(disk_sol, frac * disk_sol.u.max(), disk)
    assert rep.verdict == "parallel"
    assert rep.osc <= rep.tol == 2 * disk.h


def test_ellipse_midlevel_not_parallel(ellipse, ellipse_sol):
    rep = parallelism_check(ellipse_sol, 0.5 * ellipse_sol.u.max(), ellipse)
    assert rep.verdict == "not-parallel"
    assert rep.osc >= 5 * ellipse.h


def test_distance_levels_are_parallel(ellipse):
    d = ScalarField(ellipse.node_sd.clip(0), ellipse, ellipse.inside, "d")
    for c in (0.1, 0.3, 0.6):
        rep = parallelism_check(d, c, ellipse)
        assert rep.verdict == "parallel"
        assert rep.osc <= 2 * d.interpolation_error() + 1e-6


def test_parallel_verdict_implies_small_osc(disk, disk_sol):
    for tol in (1e-6, 1e-3, 1e-1):
        rep = parallelism_check(disk_sol, 0.1, disk, tol=tol)
        if rep.verdict == "parallel":
            assert rep.osc <= tol


def test_parallelism_level_out_of_range(disk, disk_sol):
    with pytest.raises(PreconditionError):
        parallelism_check(disk_sol, 0.0, disk)
    with pytest.raises(PreconditionError):
        parallelism_check(disk_sol, 1.0, disk)


# --- oscillation exponent ---------------------------------------------------------


def test_oscillation_on_disk_is_noise(disk, disk_sol):
    with pytest.raises(EstimationError):
        oscillation_exponent(disk, POWER2, [0.05, 0.1, 0.2, 0.4], result=disk_sol)


def test_oscillation_exponent_preconditions(ellipse, ellipse_sol):
    with pytest.raises(PreconditionError):
        oscillation_exponent(ellipse, POWER2, [0.1, 0.2, 0.3], result=ellipse_sol)
    with pytest.raises(PreconditionError):
        oscillation_exponent(ellipse, POWER2, [0.01, 0.1, 0.2, 0.3], result=ellipse_sol)


def test_oscillation_exponent_fit_is_consistent(ellipse, ellipse_sol):
    fit = oscillation_exponent(ellipse, POWER2, [0.05, 0.1, 0.2, 0.4], result=ellipse_sol)
    x, y = np.log(fit.deltas), np.log(fit.oscillations)
    slope = np.polyfit(x, y, 1)[0]
    assert fit.slope == pytest.approx(slope, rel=1e-10)
    assert np.all(np.diff(fit.oscillations) > 0)


# --- gradient bound ---------------------------------------------------------------


def test_gradient_bound_tight_on_disk(disk, disk_sol):
    rep = gradient_bound_check(disk_sol, inner_domain(disk, 0.3), 0.3, POWER2)
    assert rep.violations == 0 and rep.samples > 0
    assert 1 - 5 * disk.h <= rep.min_ratio <= rep.max_ratio <= 1 + 5 * disk.h


def test_gradient_bound_ellipse(ellipse, ellipse_sol):
    rep = gradient_bound_check(ellipse_sol, inner_domain(ellipse, 0.2), 0.2, POWER2)
    assert rep.passed and rep.min_ratio >= 1


def test_gradient_bound_kinked_profile():
    D = Domain.from_polygon(shapes.disk(1.6), h=1 / 64)
    r = minimize(D, LPP)
    rep = gradient_bound_check(r, inner_domain(D, 0.2), 0.2, LPP)
    assert rep.violations == 0
    # records are (x, y, rho, bound, quotient, margin)
    assert np.allclose([r[3] for r in rep.records], 0.45, atol=0.02)


def test_gradient_bound_detects_low_slope(disk):
    # half the torsion function violates the bound g'(rho/2) everywhere
    u = ScalarField.from_function(disk, lambda x, y: (1 - x * x - y * y) / 8)
    rep = gradient_bound_check(u, inner_domain(disk, 0.3), 0.3, POWER2)
    assert rep.violations == rep.samples > 0


def test_gradient_bound_skips_square_corners():
    D = Domain.from_polygon(shapes.square(), h=1 / 64)
    r = minimize(D, POWER2)
    rep = gradient_bound_check(r, inner_domain(D, 0.15), 0.15, POWER2)
    assert rep.skipped > 0


# --- comparison ----------------------------------------------------------------------------


def test_random_pair_is_ordered():
    D = Domain.from_polygon(shapes.disk(), cells=32)
    rng = np.random.default_rng(0)
    for _ in range(10):
        g0, g1 = random_boundary_pair(rng, D)
        pts = D.polygon
        assert np.all(g0(*pts.T) <= g1(*pts.T) + 1e-15)


def test_comparison_power():
    D = Domain.from_polygon(shapes.disk(), cells=48)
    st = comparison_property_test(D, POWER2, 10, seed=3)
    assert st.all_passed and st.counted == 10
    assert st.worst_violation <= 0


def test_comparison_kinked():
    D = Domain.from_polygon(shapes.disk(), cells=48)
    st = comparison_property_test(D, LPP, 4, seed=3)
    assert st.all_passed and st.aborted == 0


def test_comparison_strict_under_shift():
    D = Domain.from_polygon(shapes.disk(), cells=48)
    st = comparison_property_test(D, POWER2, 3, seed=2, shift=0.1)
    assert st.all_passed and st.strict_fraction == 1.0


def test_comparison_identical_data():
    D = Domain.from_polygon(shapes.disk(), cells=48)
    st = comparison_property_test(D, POWER2, 2, seed=2, shift=0.0)
    assert st.all_passed
    assert abs(st.worst_violation) <= 1e-6


def test_comparison_needs_trials(disk):
    with pytest.raises(PreconditionError):
        comparison_property_test(disk, POWER2, 0)


def test_comparison_reproducible():
    D = Domain.from_polygon(shapes.disk(), cells=32)
    a = comparison_property_test(D, POWER2, 2, seed=9)
    b = comparison_property_test(D, POWER2, 2, seed=9)
    assert a.worst_violation == b.worst_violation


# --- moving planes -----------------------------------------------------------------------


def test_discretization_error_small_on_disk(disk_sol):
    assert 0 < discretization_error(disk_sol, POWER2) <= 1e-3


def test_probe_disk(disk, disk_sol):
    rep = moving_planes_probe(disk, POWER2, 0.3, directions=8, result=disk_sol)
    assert rep.verdict == "ball-consistent", rep.as_dict()
    assert rep.witness is None and not rep.anomaly
    for row in rep.directions:
        assert abs(row["lambda_star"]) <= 2 * disk.h


def test_probe_egg_asymmetric():
    D = Domain.from_polygon(shapes.egg(), h=1 / 64, name="egg")
    rep = moving_planes_probe(D, POWER2, 0.2, directions=4)
    assert rep.verdict == "asymmetric"
    assert rep.witness is not None and "point" in rep.witness


def test_probe_refuses_nonparallel_ellipse(ellipse, ellipse_sol):
    with pytest.raises(PreconditionError):
        moving_planes_probe(ellipse, POWER2, 0.2, c=0.5 * ellipse_sol.u.max(), require_parallel=True,
                            result=ellipse_sol)


def test_probe_topology_gate():
    D = Domain.from_polygon(shapes.dumbbell(), h=1 / 64)
    with pytest.raises(TopologyError):
        moving_planes_probe(D, POWER2, 0.2, directions=2)


def test_probe_empty_parallel_surface(disk, disk_sol):
    with pytest.raises((EmptyLevelSetError, TopologyError)):
        moving_planes_probe(disk, POWER2, 1.5, result=disk_sol)
