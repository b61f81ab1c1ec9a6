"""Minimisation of ``E(v) = int f(|Dv|) - v`` with Dirichlet data, plus radial oracles
and weak-form diagnostics (Euler-Lagrange residual, variational inequality slack).

Minimisers are computed on the cut-cell P1 mesh of :mod:`parsym.mesh`.
Smooth integrands are minimised directly; integrands kinked at the origin
(``f'(0+) = a > 0``) go through a Huber continuation ``eps_k = 2**-k * h``
down to ``eps_min = h**2`` and the energy is Richardson-extrapolated in ``eps``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import splu

from .errors import EmptyLevelSetError, NonConvergenceError, PreconditionError
from .geometry.domain import Domain, LevelSet, ScalarField
from .mesh import CutCellMesh, get_mesh
from .profile import Kind, LagrangeanProfile

log = logging.getLogger(__name__)

ALGORITHMS = ("auto", "newton", "gradient-accelerated", "primal-dual")


@dataclass
class SolveConfig:
    """Knobs of :func:`minimize`.

    ``algorithm="auto"`` uses accelerated gradient (preconditioned by the
    discrete Laplacian) for smooth profiles and damped Newton as the inner
    solver of the continuation for kinked ones, where the smoothed problems
    become badly conditioned as ``eps`` shrinks. ``eps_schedule`` may be
    given explicitly; otherwise it is ``2**-k * h`` down to ``eps_min``
    (default ``h**2``).
    """

    algorithm: str = "auto"
    max_iter: int = 500
    rel_tol: float = 1e-8
    eps_schedule: tuple = None
    eps_min: float = None
    backtrack_factor: float = 2.0
    armijo: float = 1e-4
    init: str = "zero"
    seed: int = 0
    challenge: bool = True
    challenge_directions: int = 10

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise PreconditionError(f"unknown algorithm {self.algorithm!r}")
        if not self.rel_tol > 0:
            raise PreconditionError("rel_tol must be positive")
        if self.eps_schedule is not None:
            eps = np.asarray(self.eps_schedule, float)
            if np.any(np.diff(eps) >= 0) or np.any(eps < 0):
                raise PreconditionError("eps schedule must be strictly decreasing and nonnegative")

    def schedule(self, h):
        if self.eps_schedule is not None:
            return [float(e) for e in self.eps_schedule]
        floor = h * h if self.eps_min is None else self.eps_min
        out, eps = [], h
        while eps >= floor * (1 - 1e-12):
            out.append(eps)
            eps /= 2
        if out[-1] > floor * (1 + 1e-12) and floor > 0:
            out.append(floor)
        return out

    def floor_eps(self, h):
        return self.schedule(h)[-1]


@dataclass
class MinimizeResult:
    """Minimiser and diagnostics.

    ``energy`` is the discrete energy of ``u`` under the original profile;
    for kinked profiles ``extrapolated_energy`` is ``2 E_K - E_{K-1}`` from the
    last two smoothed stages (equal to ``energy`` otherwise).
    """

    u: ScalarField
    v: np.ndarray
    mesh: CutCellMesh = field(repr=False)
    energy: float
    extrapolated_energy: float
    iterations: int
    step_residual: float
    gradient_norm: float
    active_measure: float
    flat_measure: float
    gradient_floor: float
    algorithm: str
    converged: bool = True
    history: list = field(default_factory=list, repr=False)
    stages: list = field(default_factory=list)
    challenge: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "energy": self.energy,
            "extrapolated_energy": self.extrapolated_energy,
            "iterations": self.iterations,
            "step_residual": self.step_residual,
            "gradient_norm": self.gradient_norm,
            "active_measure": self.active_measure,
            "flat_measure": self.flat_measure,
            "gradient_floor": self.gradient_floor,
            "algorithm": self.algorithm,
            "max_u": float(np.max(self.v[self.mesh.dofs], initial=0.0)),
            "min_u": float(np.min(self.v[self.mesh.dofs], initial=0.0)),
        }


class _Problem:
    """Energy, gradient and Hessian over the unknowns of one mesh."""

    def __init__(self, mesh: CutCellMesh, profile: LagrangeanProfile, gb):
        self.mesh = mesh
        self.profile = profile
        self.gb = np.asarray(gb, float)
        d, fx = mesh.dofs, mesh.fixed
        Gx, Gy = mesh.Gx.tocsc(), mesh.Gy.tocsc()
        self.Ax, self.Ay = Gx[:, d].tocsr(), Gy[:, d].tocsr()
        self.cx = Gx[:, fx] @ self.gb
        self.cy = Gy[:, fx] @ self.gb
        self.w = mesh.w
        self.md = mesh.m[d]
        self.const = -float(mesh.m[fx] @ self.gb)
        self._S = None
        self._cache = {}

    def with_profile(self, profile):
        p = object.__new__(_Problem)
        p.__dict__.update(self.__dict__)
        p.profile = profile
        return p

    @property
    def S(self):
        if self._S is None:
            D = sp.diags(self.w)
            self._S = (self.Ax.T @ D @ self.Ax + self.Ay.T @ D @ self.Ay).tocsc()
        return self._S

    def grads(self, x):
        return self.Ax @ x + self.cx, self.Ay @ x + self.cy

    def energy(self, x) -> float:
        gx, gy = self.grads(x)
        s = np.hypot(gx, gy)
        return float(self.w @ self.profile.f(s) - self.md @ x + self.const)

    def gradient(self, x):
        gx, gy = self.grads(x)
        r = self.w * self.profile.flux_ratio(np.hypot(gx, gy))
        return self.Ax.T @ (r * gx) + self.Ay.T @ (r * gy) - self.md

    def _scatter(self):
        """Sparsity pattern of the Hessian and the slot of every local (a, b) pair."""
        if "pattern" not in self._cache:
            mesh = self.mesh
            n = len(mesh.dofs)
            loc = np.full(len(mesh.xy), -1)
            loc[mesh.dofs] = np.arange(n)
            li = loc[mesh.tri]
            a_idx, b_idx = np.meshgrid(np.arange(3), np.arange(3), indexing="ij")
            a_idx, b_idx = a_idx.ravel(), b_idx.ravel()
            R, C = li[:, a_idx], li[:, b_idx]
            ok = (R >= 0) & (C >= 0)
            key = R[ok].astype(np.int64) * n + C[ok]
            uniq = np.unique(key)
            pos = np.searchsorted(uniq, key)
            rows, cols = uniq // n, uniq % n
            indptr = np.searchsorted(rows, np.arange(n + 1))
            self._cache["pattern"] = (ok, pos, cols, indptr, n, a_idx, b_idx, len(uniq))
        return self._cache["pattern"]

    def hessian(self, x):
        gx, gy = self.grads(x)
        s = np.hypot(gx, gy)
        r = self.profile.flux_ratio(s)
        fpp = self.profile.fsecond(np.maximum(s, 1e-12))
        safe = np.where(s > 0, s, 1.0)
        ux, uy = np.where(s > 0, gx / safe, 1.0), np.where(s > 0, gy / safe, 0.0)
        b11 = self.w * (fpp * ux * ux + r * (1 - ux * ux))
        b22 = self.w * (fpp * uy * uy + r * (1 - uy * uy))
        b12 = self.w * (fpp - r) * ux * uy
        ok, pos, cols, indptr, n, ai, bi, nnz = self._scatter()
        bx, by = self.mesh.bx, self.mesh.by
        xa, ya, xb, yb = bx[:, ai], by[:, ai], bx[:, bi], by[:, bi]
        loc = b11[:, None] * xa * xb + b12[:, None] * (xa * yb + ya * xb) + b22[:, None] * ya * yb
        data = np.bincount(pos, weights=loc[ok], minlength=nnz)
        return sp.csc_matrix((data, cols, indptr), shape=(n, n))


def _factor(A):
    # symmetric minimum-degree ordering: several times less fill than COLAMD here
    return splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True, "DiagPivotThresh": 0.0})


def _stop(E_old, E_new, step, x, rel_tol):
    scale = max(float(np.max(np.abs(x), initial=0.0)), 1e-12)
    return (E_old - E_new) <= rel_tol * max(abs(E_new), 1e-300) and step <= rel_tol * scale


def _newton(prob: _Problem, x, cfg: SolveConfig, history):
    E = prob.energy(x)
    mu = 1e-6
    S = prob.S
    for it in range(1, cfg.max_iter + 1):
        g = prob.gradient(x)
        H = prob.hessian(x)
        accepted = False
        for _ in range(12):
            lu = _factor(H + mu * S)
            d = -lu.solve(g)
            slope = float(g @ d)
            t = 1.0
            while t > 1e-12:
                xn = x + t * d
                En = prob.energy(xn)
                if En <= E + cfg.armijo * t * slope:
                    accepted = True
                    break
                t /= cfg.backtrack_factor
            if accepted:
                break
            if np.max(np.abs(d)) <= cfg.rel_tol * max(float(np.max(np.abs(x), initial=0.0)), 1e-12):
                # already at round-off level
                return x, E, it, 0.0, float(np.max(np.abs(g)))
            mu *= 10
        if not accepted:
            raise NonConvergenceError(
                "Newton line search failed", {"iterations": it, "energy": E, "history": history[-20:]}
            )
        step = t * float(np.max(np.abs(d)))
        history.append(En)
        done = _stop(E, En, step, xn, cfg.rel_tol)
        x, E = xn, En
        mu = max(mu / 10, 1e-12)
        if done:
            return x, E, it, step, float(np.max(np.abs(prob.gradient(x))))
    raise NonConvergenceError(
        f"Newton did not converge in {cfg.max_iter} iterations",
        {"iterations": cfg.max_iter, "energy": E, "history": history[-20:]},
    )


def _fista(prob: _Problem, x, cfg: SolveConfig, history):
    """Monotone accelerated gradient in the metric of the discrete Laplacian."""
    S = prob.S
    lu = _factor(S)
    L = 1.0
    E = prob.energy(x)
    y, t = x.copy(), 1.0
    restarted = True
    for it in range(1, cfg.max_iter + 1):
        gy = prob.gradient(y)
        Ey = prob.energy(y)
        pg = lu.solve(gy)
        gpg = float(gy @ pg)
        while True:
            d = -pg / L
            xn = y + d
            En = prob.energy(xn)
            # quadratic upper model in the S-metric: E(y) - |g|^2_{S^-1} / (2L)
            if En <= Ey - 0.5 * gpg / L + 1e-15 * abs(Ey):
                break
            L *= cfg.backtrack_factor
            if L > 1e16:
                raise NonConvergenceError("backtracking diverged", {"iterations": it, "energy": E})
        if En > E:
            if restarted:
                # a plain step from x is guaranteed to descend up to 1e-15 |E|: round-off level
                return x, E, it, 0.0, float(np.max(np.abs(prob.gradient(x))))
            # momentum overshoot: restart from the last accepted iterate
            y, t = x.copy(), 1.0
            restarted = True
            continue
        restarted = False
        tn = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        step = float(np.max(np.abs(xn - x)))
        # energy decrease is quadratic in the error, so also ask for a small
        # gradient in the dual metric relative to the size of the iterate
        stationary = gpg <= cfg.rel_tol**2 * max(float(xn @ (S @ xn)), 1e-300)
        done = stationary and _stop(E, En, step, xn, cfg.rel_tol)
        y = xn + ((t - 1) / tn) * (xn - x)
        x, E, t = xn, En, tn
        history.append(E)
        L = max(L / 1.2, 1e-3)
        if done:
            return x, E, it, step, float(np.max(np.abs(prob.gradient(x))))
    raise NonConvergenceError(
        f"accelerated gradient did not converge in {cfg.max_iter} iterations",
        {"iterations": cfg.max_iter, "energy": E, "history": history[-20:]},
    )


def _initial(mesh, cfg: SolveConfig, init):
    n = len(mesh.dofs)
    if init is not None:
        return mesh.restrict(_vertex_values(init, mesh)).copy()
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        return rng.uniform(0.0, 0.1, n)
    return np.zeros(n)


def _vertex_values(obj, mesh: CutCellMesh, boundary_data=None) -> np.ndarray:
    if isinstance(obj, MinimizeResult):
        return obj.v
    if isinstance(obj, ScalarField):
        return mesh.from_grid(obj.values, boundary_data)
    if callable(obj):
        return mesh.from_function(obj)
    arr = np.asarray(obj, float)
    if arr.shape == (len(mesh.xy),):
        return arr
    return mesh.from_grid(arr, boundary_data)


def _inner(prob, x, cfg, algorithm, history):
    if algorithm == "gradient-accelerated":
        return _fista(prob, x, cfg, history)
    return _newton(prob, x, cfg, history)


def gradient_floor(profile: LagrangeanProfile, h: float, cfg: SolveConfig = None) -> float:
    """Threshold below which a discrete gradient counts as zero/flat."""
    cfg = cfg or SolveConfig()
    eps_min = cfg.floor_eps(h) if profile.regime == "f3" else 0.0
    return max(profile.sigma, eps_min) + h


def minimize(domain: Domain, profile: LagrangeanProfile, boundary_data=None, config: SolveConfig = None,
             init=None) -> MinimizeResult:
    """Minimise the discrete functional on ``domain`` with Dirichlet data.

    Parameters
    ----------
    boundary_data : None, callable ``(x, y)`` or ScalarField
        Values on the boundary; ``None`` means zero.
    init : optional starting guess (field, callable or vertex vector);
        overrides ``config.init``.

    Raises
    ------
    NonConvergenceError
        The iteration budget ran out, or a challenger had lower energy.
    """
    cfg = config or SolveConfig()
    mesh = get_mesh(domain)
    h = domain.h
    gb = mesh.boundary_values(boundary_data)
    prob = _Problem(mesh, profile, gb)
    x = _initial(mesh, cfg, init)
    history, stages = [], []
    algorithm = cfg.algorithm

    if profile.regime == "f3" and algorithm == "primal-dual":
        from .primal_dual import chambolle_pock

        x, its, step = chambolle_pock(prob, x, cfg, history)
        E = prob.energy(x)
        E_extra = E
        gnorm = np.nan
    elif profile.regime == "f3":
        algorithm = "newton" if algorithm in ("auto", "primal-dual") else algorithm
        its = 0
        sched = cfg.schedule(h)
        loose = replace(cfg, rel_tol=max(cfg.rel_tol, 1e-5))
        for k_stage, eps in enumerate(sched):
            sp_ = prob.with_profile(profile.smoothed(eps))
            # only the last two stages enter the extrapolation; earlier ones just warm-start
            c = cfg if k_stage >= len(sched) - 2 else loose
            x, Es, k, step, gnorm = _inner(sp_, x, c, algorithm, history)
            its += k
            stages.append({"eps": eps, "energy": Es, "iterations": k})
        E = prob.energy(x)
        if len(stages) >= 2:
            E_extra = 2 * stages[-1]["energy"] - stages[-2]["energy"]
        else:
            E_extra = stages[-1]["energy"]
        algorithm = f"huber-continuation/{algorithm}"
    else:
        if algorithm == "primal-dual":
            raise PreconditionError("the primal-dual solver handles kinked profiles only")
        algorithm = "gradient-accelerated" if algorithm == "auto" else algorithm
        x, E, its, step, gnorm = _inner(prob, x, cfg, algorithm, history)
        E_extra = E

    v = mesh.expand(x, gb)
    floor = gradient_floor(profile, h, cfg)
    s = np.hypot(*mesh.gradients(v).T)
    res = MinimizeResult(
        u=mesh.to_field(v),
        v=v,
        mesh=mesh,
        energy=E,
        extrapolated_energy=E_extra,
        iterations=its,
        step_residual=step,
        gradient_norm=gnorm,
        active_measure=float(mesh.w[s > profile.sigma].sum()),
        flat_measure=float(mesh.w[s <= floor].sum()),
        gradient_floor=floor,
        algorithm=algorithm,
        history=history,
        stages=stages,
    )
    if cfg.challenge:
        res.challenge = _challenge(res, prob, profile, boundary_data, cfg)
        if not res.challenge["passed"]:
            raise NonConvergenceError(
                f"challenger {res.challenge['winner']} has lower energy than the result", res.challenge
            )
    return res


def _challenge(res, prob, profile, boundary_data, cfg):
    """Compare the result with simple competitors under the original profile."""
    mesh = res.mesh
    E = prob.energy(mesh.restrict(res.v))
    tol = cfg.rel_tol * max(abs(E), 1e-12)
    if profile.regime == "f3" and cfg.algorithm != "primal-dual":
        # Huber smoothing shifts energies by at most a*eps_min*|Omega|/2
        tol += 0.5 * profile.fprime_at_zero * cfg.floor_eps(mesh.domain.h) * mesh.area
    if profile.regime == "f3" and cfg.algorithm == "primal-dual":
        tol += 1e-4 * max(abs(E), mesh.domain.h**2 * mesh.area)
    x = mesh.restrict(res.v)
    energies = {"zero": prob.energy(np.zeros_like(x))}
    if boundary_data is None:
        dom = mesh.domain
        sd = dom.node_sd
        j, i = np.unravel_index(np.argmax(sd), sd.shape)
        c = dom.grid.nodes[j, i]
        R = float(sd[j, i])
        try:
            rad = mesh.from_function(
                lambda X, Y: radial_solution(profile, R, 2, np.minimum(np.hypot(X - c[0], Y - c[1]), R))
            )
            energies["radial"] = prob.energy(mesh.restrict(rad))
        except Exception as exc:  # the oracle is optional; its failure must not mask the result
            log.debug("radial challenger skipped: %s", exc)
    rng = np.random.default_rng(cfg.seed + 7919)
    xy = mesh.xy[mesh.dofs]
    scale = max(float(np.max(np.abs(x), initial=0.0)), 1e-3)
    best_dir = np.inf
    for k in range(cfg.challenge_directions):
        c = xy[rng.integers(len(xy))]
        rad = rng.uniform(3, 20) * mesh.domain.h
        phi = np.cos(np.minimum(np.hypot(*(xy - c).T) / rad, 1.0) * np.pi / 2) ** 2
        r = minimize_scalar(lambda t: prob.energy(x + t * phi), bounds=(-scale, scale), method="bounded",
                            options={"xatol": 1e-10 * scale})
        best_dir = min(best_dir, float(r.fun))
    energies["perturbation"] = best_dir
    winner = min(energies, key=energies.get)
    return {
        "passed": all(E <= e + tol for e in energies.values()),
        "energy": E,
        "tolerance": tol,
        "winner": winner,
        **{f"challenger_{k}": v for k, v in energies.items()},
    }


# --- oracles ------------------------------------------------------------------


def _closed_radial(profile, R, N, r):
    kind, p = profile.kind, profile.params
    if profile.smoothing or kind == Kind.CUSTOM:
        return None
    if kind == Kind.POWER:
        e = p["p"] / (p["p"] - 1)
        return N ** (-1 / (p["p"] - 1)) / e * (R**e - r**e)
    if kind == Kind.PLATEAU:
        e = p["q"] / (p["q"] - 1)
        return p["sigma"] * (R - r) + N ** (-1 / (p["q"] - 1)) / e * (R**e - r**e)
    if kind == Kind.LINEAR_PLUS_POWER:
        a, e = p["a"], p["p"] / (p["p"] - 1)
        lo = np.maximum(r, N * a)
        val = N / e * (np.maximum(R / N - a, 0) ** e - np.maximum(lo / N - a, 0) ** e)
        return np.where(R > N * a, val, 0.0)
    return None


def radial_solution(profile: LagrangeanProfile, R: float, N: int, r):
    """``u_R(r) = int_r^R g'(s/N) ds``, the minimiser on the ball of radius ``R`` in ``R^N``."""
    if N < 2 or int(N) != N:
        raise PreconditionError("N must be an integer >= 2")
    r = np.asarray(r, dtype=float)
    if np.any(r < -1e-15) or np.any(r > R * (1 + 1e-12)):
        raise PreconditionError("radius must lie in [0, R]")
    r = np.clip(r, 0.0, R)
    closed = _closed_radial(profile, R, N, r)
    if closed is not None:
        return closed if closed.ndim else float(closed)

    def one(r0):
        val, _ = integrate.quad(lambda s: float(profile.gprime(s / N)), r0, R, epsabs=1e-10, epsrel=1e-10, limit=200)
        return val

    out = np.vectorize(one, otypes=[float])(r)
    return out if out.ndim else float(out)


def disk_oracle(profile, R, center=(0.0, 0.0), N=2):
    """Callable ``(x, y) -> u_R(|x - center|)``, extended by zero outside the ball."""
    cx, cy = center

    def u(x, y):
        rr = np.hypot(np.asarray(x) - cx, np.asarray(y) - cy)
        return np.where(rr <= R, radial_solution(profile, R, N, np.minimum(rr, R)), 0.0)

    return u


# --- energies and weak-form diagnostics ---------------------------------------------


def discrete_energy(v, profile: LagrangeanProfile, domain: Domain, boundary_data=None) -> float:
    """``sum_K w_K f(|grad_K v|) - int v`` on the cut-cell mesh.

    ``v`` is a ScalarField, a callable or a vertex vector. Boundary crossing
    vertices take ``boundary_data`` (zero by default) unless ``v`` is a callable.
    """
    mesh = get_mesh(domain)
    vv = _vertex_values(v, mesh, boundary_data)
    s = np.hypot(*mesh.gradients(vv).T)
    return float(mesh.w @ profile.f(s) - mesh.m @ vv)


def euler_lagrange_residual(u, profile: LagrangeanProfile, domain: Domain, floor=None) -> ScalarField:
    """Nodal weak residual ``(int flux . D phi_j - int phi_j) / int phi_j`` for hat functions ``phi_j``.

    A node is evaluated only when every element around it has
    ``|D_h u| > floor`` (default: the solver's gradient floor); other
    nodes are masked.
    """
    mesh = get_mesh(domain)
    v = _vertex_values(u, mesh)
    floor = gradient_floor(profile, domain.h) if floor is None else floor
    gx, gy = mesh.gradients(v).T
    s = np.hypot(gx, gy)
    r = mesh.w * profile.flux_ratio(s)
    res = mesh.Gx.T @ (r * gx) + mesh.Gy.T @ (r * gy) - mesh.m
    low = np.bincount(mesh.tri.ravel(), weights=np.repeat((s <= floor).astype(float), 3), minlength=len(mesh.xy))
    ok = (mesh.kind == 0) & (low == 0) & (mesh.m > 0)
    vals = np.where(ok, res / np.where(mesh.m > 0, mesh.m, 1.0), 0.0)[: mesh.n_grid].reshape(domain.grid.shape)
    return ScalarField(vals, domain, ok[: mesh.n_grid].reshape(domain.grid.shape), "el_residual")


def weak_defect(u, profile, domain, phi) -> float:
    """``|int flux . D phi - int phi|`` for one test function (vertex vector or callable)."""
    mesh = get_mesh(domain)
    v = _vertex_values(u, mesh)
    ph = _vertex_values(phi, mesh)
    ph[mesh.kind != 0] = 0.0
    g = mesh.gradients(v)
    s = np.hypot(*g.T)
    flux = profile.flux_ratio(s)[:, None] * g
    dphi = mesh.gradients(ph)
    return float(abs(mesh.w @ np.sum(flux * dphi, axis=1) - mesh.m @ ph))


def hat_bank(domain: Domain, count=20, seed=0, radius_cells=(2, 12)):
    """Random compactly supported test functions: hats and smooth bumps (vertex vectors)."""
    mesh = get_mesh(domain)
    rng = np.random.default_rng(seed)
    xy = mesh.xy
    sd = domain.signed_distance(xy)
    dofs = mesh.dofs
    h = domain.h
    bank = []
    for k in range(count):
        rad = rng.uniform(*radius_cells) * h
        cand = dofs[sd[dofs] > rad]
        if cand.size == 0:
            cand = dofs
        c = xy[cand[rng.integers(cand.size)]]
        dist = np.hypot(*(xy - c).T) / rad
        if k % 2 == 0:
            phi = np.maximum(1 - dist, 0.0)
        else:
            phi = np.cos(np.minimum(dist, 1.0) * np.pi / 2) ** 2
        phi[mesh.kind != 0] = 0.0
        bank.append(phi)
    return bank


def variational_inequality_check(u, profile: LagrangeanProfile, domain: Domain, test_bank=None, floor=None):
    """Worst slack of ``|int_{flat^c} flux . D phi - int phi| <= a int_{flat} |D phi|``.

    ``flat`` is the set of elements with ``|D_h u| <= floor``. Returns
    ``(worst_slack, slacks)``; nonpositive slack means the inequality holds.
    """
    a = profile.fprime_at_zero
    if a <= 0:
        raise PreconditionError("the variational inequality needs f'(0+) > 0")
    mesh = get_mesh(domain)
    v = _vertex_values(u, mesh)
    floor = gradient_floor(profile, domain.h) if floor is None else floor
    g = mesh.gradients(v)
    s = np.hypot(*g.T)
    sharp = s > floor
    flux = np.where(sharp[:, None], (profile.fprime(s) / np.maximum(s, 1e-300))[:, None] * g, 0.0)
    bank = test_bank if test_bank is not None else hat_bank(domain)
    slacks = []
    for phi in bank:
        ph = _vertex_values(phi, mesh)
        ph[mesh.kind != 0] = 0.0
        dphi = mesh.gradients(ph)
        lhs = abs(mesh.w @ np.sum(flux * dphi, axis=1) - mesh.m @ ph)
        rhs = a * float(mesh.w[~sharp] @ np.hypot(*dphi[~sharp].T))
        slacks.append(lhs - rhs)
    slacks = np.array(slacks)
    return float(slacks.max()), slacks


def oscillation_on(field: ScalarField, curve: LevelSet) -> dict:
    """``min``, ``max`` and ``osc`` of bilinear samples of ``field`` on the curve vertices."""
    if curve.empty:
        raise EmptyLevelSetError("cannot sample a field on an empty level set")
    vals = field.sample(curve.vertices())
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        raise EmptyLevelSetError("curve lies outside the field's grid")
    lo, hi = float(vals.min()), float(vals.max())
    return {"min": lo, "max": hi, "osc": hi - lo, "samples": int(vals.size)}
