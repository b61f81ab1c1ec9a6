import numpy as np
import pytest

from parsym import NonConvergenceError, PreconditionError, make_profile
from parsym.geometry import Domain, ScalarField, parallel_surface, shapes
from parsym.mesh import get_mesh
from parsym.solver import (
    SolveConfig,
    discrete_energy,
    disk_oracle,
    euler_lagrange_residual,
    gradient_floor,
    hat_bank,
    minimize,
    oscillation_on,
    radial_solution,
    variational_inequality_check,
    weak_defect,
)

import oracles

POWER2 = make_profile("power", p=2)
PLATEAU = make_profile("plateau", sigma=1, q=2)
LPP = make_profile("linear-plus-power", a=0.25, p=2)


@pytest.fixture(scope="module")
def disk64():
    return Domain.from_polygon(shapes.disk(), h=1 / 64, name="disk")


@pytest.fixture(scope="module")
def torsion64(disk64):
    return minimize(disk64, POWER2)


# --- radial oracles -------------------------------------------------------------------------


@pytest.mark.parametrize("profile,expected", [(POWER2, 0.25), (LPP, 0.0625),
                                              (make_profile("linear-plus-power", a=1, p=2), 0.0)])
def test_radial_examples(profile, expected):
    assert radial_solution(profile, 1.0, 2, 0.0) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("profile,gp", [
    (make_profile("power", p=3), lambda t: oracles.inverse(oracles.fprime_power(3), t)),
    (make_profile("plateau", sigma=0.5, q=3), lambda t: oracles.gprime_plateau(0.5, 3, t)),
    (make_profile("linear-plus-power", a=0.2, p=3), lambda t: oracles.inverse(oracles.fprime_lpp(0.2, 3), t)),
])
@pytest.mark.parametrize("N", [2, 3])
def test_radial_closed_forms_match_quadrature(profile, gp, N):
    for r in (0.0, 0.3, 0.7, 1.2):
        assert radial_solution(profile, 1.5, N, r) == pytest.approx(oracles.radial_u(gp, 1.5, N, r), abs=1e-8)


def test_radial_custom_profile_uses_quadrature():
    P = make_profile("custom", f=lambda s: s**2 / 2, fprime=lambda s: s, fsecond=lambda s: 1.0 + 0 * s)
    assert radial_solution(P, 1.0, 2, 0.2) == pytest.approx((1 - 0.04) / 4, abs=1e-8)


def test_radial_preconditions():
    with pytest.raises(PreconditionError):
        radial_solution(POWER2, 1.0, 1, 0.0)
    with pytest.raises(PreconditionError):
        radial_solution(POWER2, 1.0, 2, 1.5)


# --- minimize --------------------------------------------------------------------------------


def test_torsion_oracle(torsion64):
    u = torsion64.u
    x, y = u.domain.grid.nodes[..., 0], u.domain.grid.nodes[..., 1]
    err = np.abs(u.values - oracles.torsion(x, y))[u.mask]
    assert err.max() <= 5e-3


def test_grid_convergence():
    errs = []
    for h in (1 / 16, 1 / 32):
        r = minimize(Domain.from_polygon(shapes.disk(), h=h), POWER2)
        xy = r.mesh.xy[r.mesh.dofs]
        errs.append(np.max(np.abs(r.v[r.mesh.dofs] - oracles.torsion(*xy.T))))
    assert errs[0] / errs[1] >= 3


def test_boundary_values_exact():
    D = Domain.from_polygon(shapes.disk(), h=1 / 32)
    bd = lambda x, y: 0.1 * x + 0.05 * y * y
    r = minimize(D, POWER2, boundary_data=bd)
    fx = r.mesh.fixed
    assert np.array_equal(r.v[fx], bd(*r.mesh.xy[fx].T))


@pytest.mark.parametrize("profile", [POWER2, PLATEAU, LPP], ids=["power", "plateau", "lpp"])
def test_radial_consistency_and_sign(disk64, profile):
    # the plateau solution has a cone tip of slope sigma at the origin, smeared over one cell
    D = Domain.from_polygon(shapes.disk(), h=1 / 128) if profile is PLATEAU else disk64
    r = minimize(D, profile)
    fn = disk_oracle(profile, 1.0)
    t = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    s = np.linspace(0, 0.95, 20)
    pts = np.concatenate([np.column_stack([s * np.cos(a), s * np.sin(a)]) for a in t])
    err = np.abs(r.u.sample(pts) - fn(*pts.T))
    assert err.max() <= 5e-3
    assert r.v[r.mesh.dofs].min() >= -1e-8
    assert r.energy < 0


def test_plateau_gradient_exceeds_sigma(disk64):
    r = minimize(disk64, PLATEAU)
    cells, g = r.mesh.cell_gradients(r.v)
    far = np.hypot(*r.mesh.cell_centers(cells).T) > 0.1
    assert np.all(np.hypot(*g[far].T) > 1.0)


def test_supercritical_kink_gives_zero():
    D = Domain.from_polygon(shapes.disk(), h=1 / 128)
    r = minimize(D, make_profile("linear-plus-power", a=0.6, p=2))
    assert np.max(np.abs(r.v)) <= 1e-4


def test_energy_history_monotone(torsion64):
    E = np.asarray(torsion64.history)
    assert len(E) >= 2
    assert np.all(np.diff(E) <= 1e-12 * max(1.0, abs(E[0])))


def test_challenge_set_passed(torsion64):
    ch = torsion64.challenge
    assert ch["passed"]
    for k in ("challenger_zero", "challenger_radial", "challenger_perturbation"):
        assert torsion64.energy <= ch[k] + ch["tolerance"]


def test_random_start_agrees_with_zero_start():
    D = Domain.from_polygon(shapes.disk(), h=1 / 32)
    a = minimize(D, PLATEAU)
    b = minimize(D, PLATEAU, config=SolveConfig(init="random", seed=5))
    assert np.max(np.abs(a.v - b.v)) <= 10 * SolveConfig().rel_tol


def test_huber_schedule():
    cfg = SolveConfig()
    h = 1 / 64
    sched = cfg.schedule(h)
    assert sched[0] == h and sched[-1] == pytest.approx(h * h)
    assert np.all(np.diff(sched) < 0)
    assert gradient_floor(LPP, h) == pytest.approx(h * h + h)
    assert gradient_floor(PLATEAU, h) == pytest.approx(1 + h)


def test_primal_dual_agrees_with_continuation():
    D = Domain.from_polygon(shapes.disk(), cells=64)
    a = minimize(D, LPP)
    b = minimize(D, LPP, config=SolveConfig(algorithm="primal-dual", rel_tol=1e-7))
    assert np.max(np.abs(a.v - b.v)) <= 2e-3
    assert b.energy == pytest.approx(a.extrapolated_energy, rel=5e-3)


def test_primal_dual_rejects_smooth_profiles():
    D = Domain.from_polygon(shapes.disk(), h=1 / 16)
    with pytest.raises(PreconditionError):
        minimize(D, POWER2, config=SolveConfig(algorithm="primal-dual"))


def test_iteration_budget_raises():
    D = Domain.from_polygon(shapes.disk(), h=1 / 32)
    with pytest.raises(NonConvergenceError) as info:
        minimize(D, make_profile("power", p=3), config=SolveConfig(algorithm="gradient-accelerated", max_iter=3))
    assert info.value.diagnostics is not None


@pytest.mark.parametrize("kw", [{"algorithm": "sgd"}, {"rel_tol": 0.0}, {"eps_schedule": (0.1, 0.2)}])
def test_config_validation(kw):
    with pytest.raises(PreconditionError):
        SolveConfig(**kw)


# --- energies and weak forms -------------------------------------------------------


def test_energy_of_zero(disk64):
    for P in (POWER2, PLATEAU, LPP):
        assert discrete_energy(lambda x, y: 0 * x, P, disk64) == 0.0


def test_torsion_energy(disk64):
    # int |Du|^2/2 = pi/16 and int u = pi/8 for u = (1 - |x|^2)/4
    E = discrete_energy(lambda x, y: oracles.torsion(x, y), POWER2, disk64)
    assert E == pytest.approx(-np.pi / 16, rel=0.02)


def test_energy_below_plateau_is_minus_integral(disk64):
    v = lambda x, y: 0.5 * np.maximum(1 - np.hypot(x, y), 0)  # Lipschitz 0.5 < sigma
    E = discrete_energy(v, PLATEAU, disk64)
    mesh = get_mesh(disk64)
    assert E == pytest.approx(-mesh.integral(mesh.from_function(v)), abs=1e-14)
    assert E < 0


def test_el_residual_of_oracle_and_perturbation(disk64):
    u = disk_oracle(POWER2, 1.0)
    res = euler_lagrange_residual(u, POWER2, disk64)
    # the row of nodes next to the cut boundary sees the O(h^2) interpolation gap divided by h^2
    core = res.mask & (disk64.node_sd >= 2 * disk64.h)
    base = np.abs(res.values[core]).max()
    assert base <= 10 * disk64.h
    bump = lambda x, y: u(x, y) + 0.01 * np.maximum(1 - np.hypot(x - 0.3, y) / 0.2, 0) ** 2
    pert = np.abs(euler_lagrange_residual(bump, POWER2, disk64).values[core]).max()
    assert pert >= 10 * max(base, 1e-3)


def test_el_residual_masks_zero_field(disk64):
    res = euler_lagrange_residual(lambda x, y: 0 * x, POWER2, disk64)
    assert not res.mask.any()


def test_weak_defect_small_for_minimizer(disk64, torsion64):
    bank = hat_bank(disk64, count=6, seed=1)
    m = get_mesh(disk64)
    for phi in bank:
        nrm = float(m.w @ np.hypot(*m.gradients(phi).T))
        assert weak_defect(torsion64.v, POWER2, disk64, phi) <= 1e-6 + disk64.h * nrm


def test_variational_inequality_zero_field_supercritical(disk64):
    P = make_profile("linear-plus-power", a=0.6, p=2)
    worst, _ = variational_inequality_check(lambda x, y: 0 * x, P, disk64)
    assert worst <= 1e-12


def test_variational_inequality_plateau_oracle(disk64):
    worst, _ = variational_inequality_check(disk_oracle(LPP, 1.0), LPP, disk64)
    assert worst <= 5 * disk64.h


def test_variational_inequality_detects_wrong_minimizer(disk64):
    P = make_profile("linear-plus-power", a=0.6, p=2)
    worst, _ = variational_inequality_check(lambda x, y: oracles.torsion(x, y), P, disk64)
    assert worst >= 10 * disk64.h * 1e-2
    assert worst > 0


def test_variational_inequality_needs_kink(disk64):
    with pytest.raises(PreconditionError):
        variational_inequality_check(lambda x, y: 0 * x, POWER2, disk64)


# --- oscillation -------------------------------------------------------------------------


def test_oscillation_of_radial_function(disk64, torsion64):
    ls = parallel_surface(disk64, 0.2)
    f = ScalarField.from_function(disk64, lambda x, y: oracles.torsion(x, y))
    assert oscillation_on(f, ls)["osc"] <= 2 * disk64.h**2


def test_oscillation_of_constant(disk64):
    f = ScalarField.from_function(disk64, lambda x, y: 3.0 + 0 * x)
    assert oscillation_on(f, parallel_surface(disk64, 0.3))["osc"] == 0.0


def test_oscillation_on_ellipse_positive():
    E = Domain.from_polygon(shapes.ellipse(), h=1 / 32)
    r = minimize(E, POWER2)
    o = oscillation_on(r.u, parallel_surface(E, 0.2))
    assert o["osc"] > 0.01


def test_oscillation_empty_curve(disk64, torsion64):
    from parsym import EmptyLevelSetError

    with pytest.raises(EmptyLevelSetError):
        oscillation_on(torsion64.u, parallel_surface(disk64, 2.0))
