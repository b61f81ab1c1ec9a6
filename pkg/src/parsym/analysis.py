"""Experiments on computed minimisers: level-set parallelism, the oscillation
rate of ``u`` on parallel surfaces, the boundary gradient bound, comparison
property trials and the moving-planes symmetry probe.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    EmptyLevelSetError,
    EstimationError,
    NonConvergenceError,
    PreconditionError,
    UndefinedNormalError,
)
from .geometry.domain import (
    Domain,
    LevelSet,
    ScalarField,
    boundary_normal,
    inner_domain,
    interior_sphere_radius,
    level_set,
    minkowski_check,
    parallel_surface,
)
from .geometry.reflection import ReflectionFrame, caps_and_critical_lambda, reflect
from .mesh import SNAP
from .profile import LagrangeanProfile
from .solver import MinimizeResult, SolveConfig, minimize, oscillation_on

log = logging.getLogger(__name__)

VERDICTS = ("parallel", "not-parallel", "indeterminate")


def _field(u) -> ScalarField:
    return u.u if isinstance(u, MinimizeResult) else u


# --- parallelism ------------------------------------------------------------------


@dataclass
class ParallelismReport:
    """Distance-to-boundary statistics along ``{u = c}``.

    ``verdict`` is ``parallel`` when ``osc <= tol``, ``not-parallel`` when
    ``osc > 2 tol`` and ``indeterminate`` in between.
    """

    c: float
    curve: LevelSet = field(repr=False)
    d_min: float
    d_max: float
    osc: float
    verdict: str
    tol: float
    samples: int = 0

    @property
    def delta(self) -> float:
        return 0.5 * (self.d_min + self.d_max)

    def as_dict(self):
        return {
            "c": self.c,
            "d_min": self.d_min,
            "d_max": self.d_max,
            "osc": self.osc,
            "delta": self.delta,
            "verdict": self.verdict,
            "tol": self.tol,
            "samples": self.samples,
        }


def parallelism_check(u, c: float, domain: Domain, tol: float = None) -> ParallelismReport:
    """Test whether the level set ``{u = c}`` is a parallel surface of ``domain``.

    Parameters
    ----------
    u : ScalarField or MinimizeResult
    c : level, strictly between 0 and ``max u``
    tol : oscillation tolerance for ``d`` on the curve, default ``2h``

    Raises
    ------
    PreconditionError
        ``c`` is out of range.
    EmptyLevelSetError
        No curve was found.
    """
    uf = _field(u)
    tol = 2 * domain.h if tol is None else float(tol)
    umax = uf.max()
    if not 0 < c < umax:
        raise PreconditionError(f"level c={c:g} must lie strictly between 0 and max u={umax:g}")
    ls = level_set(np.where(uf.mask, uf.values, 0.0), uf.grid, c, source=uf.name, mask=uf.mask)
    if ls.empty:
        raise EmptyLevelSetError(f"no curve at level {c:g}")
    pts = ls.vertices()
    d = domain.signed_distance(pts)
    lo, hi = float(d.min()), float(d.max())
    osc = hi - lo
    if osc <= tol:
        verdict = "parallel"
    elif osc > 2 * tol:
        verdict = "not-parallel"
    else:
        verdict = "indeterminate"
    return ParallelismReport(float(c), ls, lo, hi, osc, verdict, tol, len(pts))


# --- oscillation rate ---------------------------------------------------------------


@dataclass
class OscillationFit:
    """Least-squares fit ``log osc = slope * log delta + intercept``."""

    slope: float
    intercept: float
    deltas: np.ndarray
    oscillations: np.ndarray
    noise_floor: float
    dropped: list = field(default_factory=list)

    def rows(self):
        return [(d, o) for d, o in zip(self.deltas, self.oscillations)]

    def as_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "noise_floor": self.noise_floor,
            "used": " ".join(f"{d:g}" for d in self.deltas),
            "dropped": " ".join(f"{d:g}" for d in self.dropped),
        }


def oscillation_exponent(domain: Domain, profile: LagrangeanProfile, deltas, result: MinimizeResult = None,
                         config: SolveConfig = None) -> OscillationFit:
    """Fit the rate at which ``max u - min u`` on ``{d = delta}`` vanishes.

    Values of ``delta`` whose oscillation is below twice the bilinear
    interpolation error of ``u`` are dropped.

    Raises
    ------
    PreconditionError
        Fewer than four values, or a value outside ``(2h, inradius/2)``.
    EstimationError
        Fewer than three values survive the noise floor.
    """
    deltas = np.sort(np.asarray(deltas, dtype=float))
    h = domain.h
    inradius = float(domain.node_sd.max())
    if deltas.size < 4:
        raise PreconditionError("need at least four delta values")
    if deltas[0] <= 2 * h or deltas[-1] >= inradius / 2:
        raise PreconditionError(f"delta values must lie in (2h, inradius/2) = ({2 * h:g}, {inradius / 2:g})")
    res = result or minimize(domain, profile, config=config)
    u = res.u
    noise = 2.0 * u.interpolation_error()
    keep, osc, dropped = [], [], []
    for d in deltas:
        o = oscillation_on(u, parallel_surface(domain, d))["osc"]
        if o < noise:
            dropped.append(float(d))
        else:
            keep.append(float(d))
            osc.append(o)
    if len(keep) < 3:
        raise EstimationError(
            f"only {len(keep)} oscillation(s) above the noise floor {noise:.3g}",
            {"dropped": dropped, "noise_floor": noise},
        )
    slope, icpt = np.polyfit(np.log(keep), np.log(osc), 1)
    return OscillationFit(float(slope), float(icpt), np.array(keep), np.array(osc), noise, dropped)


# --- gradient lower bound ------------------------------------------------------------


@dataclass
class GradientBoundReport:
    """Inward difference quotients of ``u`` on ``boundary(G)`` against ``g'(rho/N)``."""

    samples: int
    violations: int
    skipped: int
    slack: float
    t: float
    min_ratio: float
    max_ratio: float
    worst_margin: float
    records: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.samples > 0

    def as_dict(self):
        return {
            "samples": self.samples,
            "violations": self.violations,
            "skipped": self.skipped,
            "slack": self.slack,
            "t": self.t,
            "min_ratio": self.min_ratio,
            "max_ratio": self.max_ratio,
            "worst_margin": self.worst_margin,
        }


def gradient_bound_check(u, G: Domain, delta: float, profile: LagrangeanProfile, N: int = 2, spacing=None,
                         t=None, slack=None) -> GradientBoundReport:
    """Check ``(u(x0 + t nu) - u(x0)) / t >= g'(rho(x0)/N) - slack`` on ``boundary(G)``.

    ``G`` is the inner domain at distance ``delta``; ``nu`` its inward normal
    and ``rho(x0)`` the radius of the largest disc in ``G`` touching ``x0``.
    ``slack`` is relative to the bound (default ``5h``), the step defaults
    to ``t = 2h``. Points without a normal (corners) are skipped and counted.
    """
    uf = _field(u)
    h = uf.h
    t = 2 * h if t is None else t
    pts = G.boundary_samples(spacing or 4 * h)
    recs, skipped = [], 0
    for x0 in pts:
        try:
            foot, nu = boundary_normal(G, x0)
            rho = interior_sphere_radius(G, foot)
        except UndefinedNormalError:
            skipped += 1
            continue
        bound = float(profile.gprime(rho / N))
        s = (5 * h if slack is None else slack) * bound
        vals = uf.sample(np.array([foot, foot + t * nu]))
        if not np.all(np.isfinite(vals)):
            skipped += 1
            continue
        q = float((vals[1] - vals[0]) / t)
        recs.append((foot[0], foot[1], rho, bound, q, q - (bound - s)))
    if not recs:
        raise EmptyLevelSetError("no boundary sample admitted a normal")
    arr = np.array(recs)
    bound, q, margin = arr[:, 3], arr[:, 4], arr[:, 5]
    pos = bound > 0
    ratio = q[pos] / bound[pos] if pos.any() else np.array([np.nan])
    return GradientBoundReport(
        samples=len(recs),
        violations=int(np.sum(margin < 0)),
        skipped=skipped,
        slack=float(5 * h if slack is None else slack),
        t=float(t),
        min_ratio=float(np.min(ratio)),
        max_ratio=float(np.max(ratio)),
        worst_margin=float(margin.min()),
        records=recs,
    )


# --- comparison trials ------------------------------------------------------------------


@dataclass
class ComparisonStats:
    """Outcome of ordered-boundary-data trials; ``counted`` excludes skipped and aborted trials."""

    trials: int
    counted: int
    passed: int
    skipped: int
    aborted: int
    worst_violation: float
    strict_fraction: float
    records: list = field(default_factory=list, repr=False)

    @property
    def all_passed(self) -> bool:
        return self.counted > 0 and self.passed == self.counted

    def as_dict(self):
        return {
            "trials": self.trials,
            "counted": self.counted,
            "passed": self.passed,
            "skipped": self.skipped,
            "aborted": self.aborted,
            "worst_violation": self.worst_violation,
            "strict_fraction": self.strict_fraction,
        }


def random_boundary_pair(rng, domain: Domain, amplitude=0.05, modes=3, shift=None):
    """Smooth data ``g0 <= g1``: a random trigonometric polynomial, plus a
    nonnegative bump centred on the boundary for ``g1``.

    ``shift`` replaces the bump by a constant. The data are evaluated in
    coordinates scaled by the domain's width.
    """
    lo = domain.polygon.min(0)
    L = float(np.max(domain.polygon.max(0) - lo))
    kx, ky = rng.integers(-modes, modes + 1, size=(2, 2 * modes))
    ph = rng.uniform(0, 2 * np.pi, size=2 * modes)
    amp = rng.uniform(-1, 1, size=2 * modes) * amplitude / np.sqrt(2 * modes)
    bnd = domain.boundary_samples()
    b_c = bnd[rng.integers(len(bnd))]
    b_r = rng.uniform(0.3, 1.0) * L
    b_a = rng.uniform(0.2, 1.0) * amplitude

    def g0(x, y):
        X, Y = (np.asarray(x) - lo[0]) / L, (np.asarray(y) - lo[1]) / L
        out = np.zeros(np.broadcast(X, Y).shape)
        for k in range(2 * modes):
            out = out + amp[k] * np.cos(np.pi * (kx[k] * X + ky[k] * Y) + ph[k])
        return out

    def g1(x, y):
        if shift is not None:
            return g0(x, y) + shift
        r = np.hypot(np.asarray(x) - b_c[0], np.asarray(y) - b_c[1]) / b_r
        return g0(x, y) + b_a * np.cos(np.minimum(r, 1.0) * np.pi / 2) ** 2

    return g0, g1


def comparison_property_test(domain: Domain, profile: LagrangeanProfile, trials: int, seed: int = 0,
                             config: SolveConfig = None, shift=None, tolerance=None) -> ComparisonStats:
    """Draw ordered boundary data ``g0 <= g1``, minimise both and check ``u0 <= u1``.

    A trial passes when ``max(u0 - u1) <= tol`` with ``tol = 10 rel_tol max|u|``
    unless ``tolerance`` is given. For profiles with a plateau (``sigma > 0``)
    only pairs with a nonempty set ``{|Du| > sigma}`` count. A solver failure
    aborts the trial only. ``strict_fraction`` is the share of nodes with
    ``|Du| > sigma`` where ``u0 < u1`` strictly, over counted trials.
    """
    if trials < 1:
        raise PreconditionError("trials must be at least 1")
    cfg = config or SolveConfig()
    cfg = replace(cfg, challenge=False)
    rng = np.random.default_rng(seed)
    recs = []
    passed = skipped = aborted = 0
    worst = -np.inf
    strict_num = strict_den = 0
    for k in range(trials):
        g0, g1 = random_boundary_pair(rng, domain, shift=shift)
        try:
            r0 = minimize(domain, profile, g0, cfg)
            r1 = minimize(domain, profile, g1, cfg)
        except NonConvergenceError as exc:
            log.warning("comparison trial %d aborted: %s", k, exc)
            aborted += 1
            recs.append({"trial": k, "status": "aborted"})
            continue
        if profile.sigma > 0 and r0.active_measure + r1.active_measure <= 0:
            skipped += 1
            recs.append({"trial": k, "status": "skipped"})
            continue
        mesh = r0.mesh
        diff = (r0.v - r1.v)[mesh.dofs]
        scale = max(float(np.max(np.abs(r0.v))), float(np.max(np.abs(r1.v))), 1e-12)
        tol = 10 * cfg.rel_tol * scale if tolerance is None else tolerance
        viol = float(diff.max(initial=-np.inf))
        ok = viol <= tol
        passed += ok
        worst = max(worst, viol)
        # nodal gradient proxy: largest adjacent element gradient
        s = np.hypot(*mesh.gradients(r0.v).T)
        node_s = np.zeros(len(mesh.xy))
        np.maximum.at(node_s, mesh.tri.ravel(), np.repeat(s, 3))
        act = node_s[mesh.dofs] > profile.sigma
        strict_num += int(np.sum(diff[act] < 0))
        strict_den += int(act.sum())
        recs.append({"trial": k, "status": "pass" if ok else "fail", "max_u0_minus_u1": viol, "tolerance": tol})
    counted = trials - skipped - aborted
    return ComparisonStats(
        trials=trials,
        counted=counted,
        passed=int(passed),
        skipped=skipped,
        aborted=aborted,
        worst_violation=float(worst),
        strict_fraction=float(strict_num / strict_den) if strict_den else np.nan,
        records=recs,
    )


# --- moving planes --------------------------------------------------------------------------


@dataclass
class SymmetryReport:
    """Per-direction sweep results and the overall verdict.

    ``verdict`` is ``ball-consistent`` or ``asymmetric``; the latter always
    carries a ``witness`` dict naming the direction, the point and the
    failed test.
    """

    verdict: str
    directions: list
    witness: dict = None
    c: float = np.nan
    delta: float = np.nan
    parallelism: ParallelismReport = None
    minkowski_distance: float = np.nan
    wcp_tolerance: float = np.nan
    anomaly: bool = False
    notes: list = field(default_factory=list)

    def as_dict(self):
        d = {
            "verdict": self.verdict,
            "c": self.c,
            "delta": self.delta,
            "directions": len(self.directions),
            "symmetric_directions": sum(r["case"] == "symmetric" for r in self.directions),
            "minkowski_distance": self.minkowski_distance,
            "wcp_tolerance": self.wcp_tolerance,
            "anomaly": self.anomaly,
        }
        if self.parallelism is not None:
            d["parallelism_verdict"] = self.parallelism.verdict
            d["parallelism_osc"] = self.parallelism.osc
        if self.witness:
            d.update({f"witness_{k}": v for k, v in self.witness.items()})
        return d


def discretization_error(result: MinimizeResult, profile: LagrangeanProfile, config: SolveConfig = None) -> float:
    """Richardson estimate ``max |u_h - u_2h| / 3`` of the grid error of ``result``.

    The comparison runs over nodes whose surrounding coarse and fine cells
    lie inside the domain.
    """
    dom = result.mesh.domain
    cfg = replace(config or SolveConfig(), challenge=False)
    coarse = Domain.from_polygon(dom.polygon, h=2 * dom.h, name=dom.name + "-2h")
    uc = minimize(coarse, profile, config=cfg).u
    u = result.u
    nodes = u.grid.nodes
    vals = uc.sample(nodes)
    inside_c = ScalarField(uc.mask.astype(float), coarse, np.ones(coarse.grid.shape, bool)).sample(nodes) > 0.999
    ok = u.mask & inside_c & np.isfinite(vals)
    if not ok.any():
        return 0.0
    return float(np.max(np.abs(u.values[ok] - vals[ok])) / 3.0)


def _auto_level(u: ScalarField, domain: Domain, delta: float) -> float:
    """``u`` at the point of ``{d = delta}`` closest to the centroid."""
    ls = parallel_surface(domain, delta)
    if ls.empty:
        raise EmptyLevelSetError(f"no parallel surface at delta={delta:g}")
    pts = ls.vertices()
    p = pts[np.argmin(np.hypot(*(pts - domain.centroid).T))]
    return float(u.sample(p[None])[0])


def _quotients(u: ScalarField, Q, xi, h):
    """Central ``xi``-difference quotients of ``u`` at ``Q`` for ``t`` in ``2h, 4h, 8h``."""
    out = []
    for t in (2 * h, 4 * h, 8 * h):
        a, b = u.sample(np.array([Q + t * xi, Q - t * xi]))
        out.append(float((a - b) / (2 * t)))
    return out


def moving_planes_probe(Omega: Domain, profile: LagrangeanProfile, delta: float, c="auto", directions: int = 16,
                        require_parallel: bool = False, result: MinimizeResult = None, config: SolveConfig = None,
                        angle_offset: float = 0.0, resample_tol: float = None) -> SymmetryReport:
    """Run the moving-plane argument numerically on ``G = {d > delta}``.

    For each of ``directions`` equally spaced unit vectors ``xi`` the sweep
    finds ``lambda*`` on ``G`` and its critical case. The solution ``u`` is
    reflected across ``x.xi = lambda*`` and compared on the reflected cap
    ``{x in Omega : x.xi < lambda*, R x in Omega}``:

    * every direction: ``u >= u^lam - tol`` (weak comparison);
    * tangency at ``P``: the level-set equality ``u(P) = u^lam(P)`` against
      the strict ordering the comparison principle predicts;
    * orthogonality at ``Q``: central quotients of ``u`` along ``xi`` at
      ``Q`` for ``t = 2h, 4h, 8h`` must not share a sign beyond the noise.

    Field tests use the tolerance ``10 rel_tol max u + 2 e + (h**2 + SNAP h) max|Du|``
    where ``e`` is the larger of the bilinear interpolation error and the
    discretisation error estimate of :func:`discretization_error` (or
    ``resample_tol``); the last term covers the sweep's containment
    tolerance and the boundary snapping of the mesh.
    The verdict is ``ball-consistent`` iff every direction is symmetric and
    no field test fails. ``require_parallel`` makes the probe refuse levels
    that :func:`parallelism_check` does not call parallel.

    Raises
    ------
    TopologyError
        The parallel surface at ``delta`` is not a single closed curve.
    PreconditionError
        ``require_parallel`` is set and the level is not parallel.
    NonConvergenceError
        The solver failed.
    """
    h = Omega.h
    G = inner_domain(Omega, delta)
    res = result or minimize(Omega, profile, config=config)
    cfg = config or SolveConfig()
    u = res.u
    level = _auto_level(u, Omega, delta) if c == "auto" else float(c)
    par = parallelism_check(u, level, Omega)
    if require_parallel and par.verdict != "parallel":
        raise PreconditionError(
            f"level c={level:g} is {par.verdict} (osc d = {par.osc:.3g} vs tol {par.tol:.3g}); probe refused"
        )
    mk = minkowski_check(G, delta, Omega)
    umax = u.max()
    interp = u.interpolation_error()
    disc = discretization_error(res, profile, config=cfg) if resample_tol is None else resample_tol
    # lambda* is located to within the containment tolerance h**2 and nodes
    # within SNAP*h of the boundary are pinned to zero; each perturbs values
    # by at most |Du| times the offset
    geo = (h * h + SNAP * h) * u.gradient_magnitude_max()
    wcp_tol = 10 * cfg.rel_tol * umax + 2 * max(interp, disc) + geo
    eq_tol = wcp_tol + geo
    nodes = u.grid.nodes
    in_omega = u.mask

    rows, witness = [], None
    for k in range(directions):
        th = angle_offset + 2 * np.pi * k / directions
        xi = np.array([np.cos(th), np.sin(th)])
        cc = caps_and_critical_lambda(G, xi, tol=h * h)
        frame = ReflectionFrame(tuple(xi), cc.lambda_star)
        ul = reflect(u, frame)
        region = in_omega & ul.mask & (frame.side(nodes) < 0)
        diff = np.where(region, u.values - ul.values, np.inf)
        row = dict(cc.as_dict())
        row.update({"angle": th, "region_nodes": int(region.sum())})
        fails = []
        if region.any():
            j, i = np.unravel_index(np.argmin(diff), diff.shape)
            row["wcp_min"] = float(diff[j, i])
            row["sup_abs_diff"] = float(np.max(np.abs(np.where(region, u.values - ul.values, 0.0))))
            if diff[j, i] < -wcp_tol:
                fails.append(("wcp-violation", nodes[j, i], float(diff[j, i])))
        if cc.P is not None:
            gap = float(u.sample(cc.P[None])[0] - ul.sample(cc.P[None])[0])
            row["tangency_gap"] = gap
            if abs(gap) > eq_tol:
                fails.append(("tangency-equality", cc.P, gap))
        if cc.Q is not None:
            qs = _quotients(u, cc.Q, xi, h)
            row["quotients"] = " ".join(f"{q:.4g}" for q in qs)
            if np.all(np.sign(qs) == np.sign(qs[0])) and min(abs(q) for q in qs) > eq_tol / (2 * h):
                fails.append(("orthogonality-derivative", cc.Q, qs[0]))
        if not cc.symmetric and not fails:
            point = cc.P if cc.P is not None else cc.Q
            fails.append(("off-midline", point, cc.lambda_star - cc.midline))
        row["failed"] = ",".join(f[0] for f in fails)
        rows.append(row)
        if fails and witness is None:
            kind, pt, val = fails[0]
            witness = {
                "direction": f"{xi[0]:.6f} {xi[1]:.6f}",
                "kind": kind,
                "point": "nan nan" if pt is None else f"{pt[0]:.6f} {pt[1]:.6f}",
                "value": val,
                "lambda_star": cc.lambda_star,
                "midline": cc.midline,
                "case": cc.case,
            }

    verdict = "asymmetric" if witness else "ball-consistent"
    rep = SymmetryReport(verdict, rows, witness, level, delta, par, mk, wcp_tol)
    if verdict == "asymmetric" and par.verdict == "parallel":
        rep.anomaly = True
        rep.notes.append("level reported parallel yet the probe found asymmetry")
        log.warning("parallel level with asymmetric probe on %s", Omega.name)
    return rep
