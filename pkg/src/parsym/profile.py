"""Convex Lagrangeans ``f`` acting on ``|Dv|`` and the derivative of their conjugate.

Three closed-form families cover the regimes the solver distinguishes:

* ``power``: ``f(s) = s**p / p``, strictly convex, ``sigma = 0``;
* ``plateau``: ``f(s) = ((s - sigma)_+)**q / q``, flat on ``[0, sigma]``;
* ``linear-plus-power``: ``f(s) = a*s + s**p / p``, kinked at the origin
  (``f'(0+) = a > 0``).

``custom`` profiles come either from callables or from a two-column table.
All evaluators are vectorised over numpy arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InversionError, ProfileError

__all__ = [
    "Kind",
    "LagrangeanProfile",
    "ConjugateTable",
    "ProfileReport",
    "make_profile",
    "conjugate_gprime",
    "verify_profile",
    "load_profile_table",
]

BISECTION_TOL = 1e-10
MAX_BRACKET_EXPANSIONS = 200


class Kind(str, enum.Enum):
    POWER = "power"
    PLATEAU = "plateau"
    LINEAR_PLUS_POWER = "linear-plus-power"
    CUSTOM = "custom"


class ConjugateTable:
    """Evaluator of ``g'`` where ``g`` is the Fenchel conjugate of ``f``.

    ``g'`` inverts ``f'`` on ``(sigma, inf)``; below ``f'(sigma+)`` it equals
    ``sigma``. Built-in kinds pass ``closed_form``; otherwise ``f'`` is
    inverted by bisection, starting from a monotone lookup table on
    ``(sigma, s_max]`` and doubling the upper bracket as needed.
    """

    def __init__(self, fprime, sigma, floor_value, closed_form=None, s_max=1.0):
        self._fprime = fprime
        self.sigma = float(sigma)
        self.floor_value = float(floor_value)
        self.closed_form = closed_form
        self.s_max = float(s_max)
        grid = self.sigma + np.geomspace(1e-8, 1.0, 64) * self.s_max
        self._table_s = grid
        self._table_fp = np.maximum.accumulate(np.asarray(fprime(grid), dtype=float))

    @property
    def is_closed_form(self) -> bool:
        return self.closed_form is not None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("g' is only evaluated on t >= 0")
        if self.closed_form is not None:
            return self.closed_form(t)
        return self.invert(t)

    def invert(self, t):
        """Bisection inverse of ``f'``, ignoring any closed form."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.full(t.shape, self.sigma)
        active = t > self.floor_value
        if np.any(active):
            out[active] = self._bisect(t[active])
        return out[0] if scalar else out

    def _bisect(self, t):
        pos = np.searchsorted(self._table_fp, t, side="left")
        lo = np.where(pos > 0, self._table_s[np.maximum(pos - 1, 0)], self.sigma)
        hi = self._table_s[np.minimum(pos, len(self._table_s) - 1)].copy()
        expansions = 0
        need = self._fprime(hi) <= t
        while np.any(need):
            if expansions >= MAX_BRACKET_EXPANSIONS:
                raise InversionError(
                    "could not bracket f'(s) = t",
                    {"t": t[need].tolist()[:5], "hi": hi[need].tolist()[:5]},
                )
            lo = np.where(need, hi, lo)
            hi = np.where(need, self.sigma + 2.0 * (hi - self.sigma), hi)
            need = self._fprime(hi) <= t
            expansions += 1
        for _ in range(400):
            if np.all(hi - lo <= BISECTION_TOL):
                break
            mid = 0.5 * (lo + hi)
            below = self._fprime(mid) < t
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        else:
            raise InversionError("bisection did not reach tolerance", {"width": float(np.max(hi - lo))})
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class LagrangeanProfile:
    """An integrand ``f`` with its first two derivatives and ``g'``.

    ``fsecond`` is only meaningful on ``s > sigma``; where a family has a
    one-sided second derivative at ``sigma`` the right limit is used and
    ``0`` is returned on the flat part.
    """

    kind: Kind
    params: Mapping[str, float]
    sigma: float
    fprime_at_zero: float
    f_eval: Callable
    fprime_eval: Callable
    fsecond_eval: Callable
    conjugate: ConjugateTable = field(repr=False)
    smoothing: float = 0.0

    def f(self, s):
        return self.f_eval(np.asarray(s, dtype=float))

    def fprime(self, s):
        return self.fprime_eval(np.asarray(s, dtype=float))

    def fsecond(self, s):
        return self.fsecond_eval(np.asarray(s, dtype=float))

    def gprime(self, t):
        return self.conjugate(t)

    @property
    def regime(self) -> str:
        """``"f3"`` when ``f'(0+) > 0`` (kinked at the origin), else ``"f2"``."""
        return "f3" if self.fprime_at_zero > 0 else "f2"

    @property
    def is_smooth(self) -> bool:
        return self.fprime_at_zero == 0 or self.smoothing > 0

    def flux_ratio(self, s):
        """``f'(s)/s`` with the ``s -> 0`` limit taken where it is finite."""
        s = np.asarray(s, dtype=float)
        tiny = 1e-12
        safe = np.maximum(s, tiny)
        return self.fprime(safe) / safe

    def smoothed(self, eps: float) -> "LagrangeanProfile":
        """Huber regularisation of the kink: ``a|p|`` becomes ``a*H_eps(|p|)``.

        ``H_eps(s) = s**2/(2 eps)`` for ``s <= eps`` and ``s - eps/2`` above.
        Smooth profiles are returned unchanged.
        """
        a = self.fprime_at_zero
        if a == 0 or eps <= 0:
            return self
        f0, fp0, fpp0 = self.f_eval, self.fprime_eval, self.fsecond_eval

        def f(s):
            s = np.asarray(s, dtype=float)
            hub = np.where(s <= eps, s * s / (2 * eps), s - eps / 2)
            return f0(s) - a * s + a * hub

        def fp(s):
            s = np.asarray(s, dtype=float)
            return fp0(s) - a + a * np.minimum(s / eps, 1.0)

        def fpp(s):
            s = np.asarray(s, dtype=float)
            return fpp0(s) + np.where(s <= eps, a / eps, 0.0)

        return LagrangeanProfile(
            kind=self.kind,
            params=self.params,
            sigma=0.0,
            fprime_at_zero=0.0,
            f_eval=f,
            fprime_eval=fp,
            fsecond_eval=fpp,
            conjugate=ConjugateTable(fp, 0.0, 0.0),
            smoothing=float(eps),
        )

    def describe(self) -> str:
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.kind.value}({args})"


def _power(p):
    def f(s):
        return s**p / p

    def fp(s):
        return s ** (p - 1)

    def fpp(s):
        with np.errstate(divide="ignore"):
            return (p - 1) * s ** (p - 2)

    def gp(t):
        return np.asarray(t, dtype=float) ** (1.0 / (p - 1))

    return f, fp, fpp, gp


def _plateau(sigma, q):
    def f(s):
        return np.maximum(s - sigma, 0.0) ** q / q

    def fp(s):
        return np.maximum(s - sigma, 0.0) ** (q - 1)

    def fpp(s):
        over = np.maximum(s - sigma, 0.0)
        with np.errstate(divide="ignore"):
            val = (q - 1) * over ** (q - 2)
        return np.where(s > sigma, val, 0.0 if q >= 2 else np.inf)

    def gp(t):
        t = np.asarray(t, dtype=float)
        return sigma + t ** (1.0 / (q - 1))

    return f, fp, fpp, gp


def _linear_plus_power(a, p):
    def f(s):
        return a * s + s**p / p

    def fp(s):
        return a + s ** (p - 1)

    def fpp(s):
        with np.errstate(divide="ignore"):
            return (p - 1) * s ** (p - 2)

    def gp(t):
        t = np.asarray(t, dtype=float)
        return np.maximum(t - a, 0.0) ** (1.0 / (p - 1))

    return f, fp, fpp, gp


def _table_profile(table):
    """Convex C^1 fit of tabulated ``(s, f(s))`` pairs.

    ``f'`` is the shape-preserving PCHIP through the secant slopes placed at
    interval midpoints (constant before the first midpoint, linear after the
    last) and ``f`` is its exact antiderivative with ``f(0) = 0``. Monotone
    secants give a monotone ``f'``, hence a convex ``f``.
    """
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[1] != 2 or len(table) < 4:
        raise ProfileError("custom table needs at least four (s, f(s)) rows")
    s, fs = table[:, 0], table[:, 1]
    if np.any(np.diff(s) <= 0):
        raise ProfileError("custom table abscissae must be strictly increasing")
    if s[0] != 0.0 or abs(fs[0]) > 1e-14:
        raise ProfileError("custom table must start at (0, 0)")
    secant = np.diff(fs) / np.diff(s)
    mids = 0.5 * (s[1:] + s[:-1])
    if np.any(np.diff(secant) < -1e-12 * max(1.0, np.max(np.abs(secant)))):
        raise ProfileError("custom table is not convex")
    secant = np.maximum.accumulate(secant)
    inner = PchipInterpolator(mids, secant, extrapolate=False)
    inner_int = inner.antiderivative()
    m0, m_end, x0, x_end = secant[0], secant[-1], mids[0], mids[-1]
    tail = (secant[-1] - secant[-2]) / (mids[-1] - mids[-2])
    f_at_x0 = m0 * x0
    f_at_end = f_at_x0 + float(inner_int(x_end) - inner_int(x0))

    def fp(x):
        x = np.asarray(x, dtype=float)
        mid = inner(np.clip(x, x0, x_end))
        return np.where(x < x0, m0, np.where(x > x_end, m_end + tail * (x - x_end), mid))

    def fpp(x):
        x = np.asarray(x, dtype=float)
        mid = inner.derivative()(np.clip(x, x0, x_end))
        return np.where(x < x0, 0.0, np.where(x > x_end, tail, mid))

    def f(x):
        x = np.asarray(x, dtype=float)
        xm = np.clip(x, x0, x_end)
        mid = f_at_x0 + inner_int(xm) - inner_int(x0)
        dx = x - x_end
        return np.where(
            x < x0, m0 * x, np.where(x > x_end, f_at_end + m_end * dx + 0.5 * tail * dx * dx, mid)
        )

    zero = secant <= 1e-14
    sigma = float(mids[np.nonzero(zero)[0][-1]]) if zero[0] else 0.0
    return f, fp, fpp, sigma, float(m0) if m0 > 1e-14 else 0.0


def make_profile(kind, **params) -> LagrangeanProfile:
    """Instantiate a profile of the given kind.

    Parameters
    ----------
    kind : str or Kind
        ``"power"`` (``p``), ``"plateau"`` (``sigma``, ``q``),
        ``"linear-plus-power"`` (``a``, ``p``) or ``"custom"`` (``table``, or
        callables ``f``, ``fprime``, ``fsecond`` with optional ``sigma`` and
        ``fprime_at_zero``).

    Raises
    ------
    ProfileError
        If exponents are ``<= 1`` or thresholds are negative.
    """
    kind = Kind(kind)
    if kind is Kind.POWER:
        p = float(params.get("p", 2.0))
        if p <= 1:
            raise ProfileError(f"power profile needs p > 1 (got {p})")
        f, fp, fpp, gp = _power(p)
        return _build(kind, {"p": p}, 0.0, 0.0, f, fp, fpp, gp)
    if kind is Kind.PLATEAU:
        sigma = float(params.get("sigma", 1.0))
        q = float(params.get("q", 2.0))
        if sigma < 0:
            raise ProfileError(f"plateau threshold must be >= 0 (got {sigma})")
        if q <= 1:
            raise ProfileError(f"plateau exponent needs q > 1 (got {q})")
        f, fp, fpp, gp = _plateau(sigma, q)
        return _build(kind, {"sigma": sigma, "q": q}, sigma, 0.0, f, fp, fpp, gp)
    if kind is Kind.LINEAR_PLUS_POWER:
        a = float(params.get("a", 1.0))
        p = float(params.get("p", 2.0))
        if a < 0:
            raise ProfileError(f"f'(0) must be >= 0 (got {a})")
        if p <= 1:
            raise ProfileError(f"power part needs p > 1 (got {p})")
        f, fp, fpp, gp = _linear_plus_power(a, p)
        return _build(kind, {"a": a, "p": p}, 0.0, a, f, fp, fpp, gp)

    if "table" in params:
        f, fp, fpp, sigma, a = _table_profile(params["table"])
        info = {"rows": float(len(params["table"]))}
    else:
        try:
            f, fp, fpp = params["f"], params["fprime"], params["fsecond"]
        except KeyError as exc:
            raise ProfileError("custom profile needs a table or f/fprime/fsecond callables") from exc
        sigma = float(params.get("sigma", 0.0))
        a = float(params.get("fprime_at_zero", 0.0))
        info = {}
    if sigma < 0 or a < 0:
        raise ProfileError("custom profile thresholds must be >= 0")
    if sigma > 0 and a > 0:
        raise ProfileError("a profile cannot be both flat near 0 and kinked at 0")
    return _build(kind, info, sigma, a, f, fp, fpp, None)


def _build(kind, params, sigma, a, f, fp, fpp, gp):
    floor_value = float(fp(np.asarray(sigma + 0.0))) if a > 0 else 0.0
    table = ConjugateTable(fp, sigma, max(floor_value, a), closed_form=gp)
    return LagrangeanProfile(kind, dict(params), float(sigma), float(a), f, fp, fpp, table)


def conjugate_gprime(profile: LagrangeanProfile, t):
    """``g'(t)`` for ``t >= 0``; closed form when the family has one."""
    return profile.gprime(t)


def load_profile_table(path) -> np.ndarray:
    """Read a two-column ``s f(s)`` text table."""
    return np.loadtxt(path, dtype=float, ndmin=2)


@dataclass
class ProfileReport:
    checks: dict = field(default_factory=dict)

    def add(self, name, violation):
        self.checks[name] = (bool(violation <= 0.0), float(max(violation, 0.0)))

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    def failed(self):
        return [name for name, (ok, _) in self.checks.items() if not ok]

    def __str__(self):
        lines = [f"{name}: {'pass' if ok else 'FAIL'} (worst {worst:.3e})" for name, (ok, worst) in self.checks.items()]
        return "\n".join(lines)


def verify_profile(profile, s_samples=None, s_max=10.0, big_s=1e6, big_m=1e3) -> ProfileReport:
    """Check the standing assumptions on ``f`` at sampled points.

    Returns a report; nothing is raised. Each entry stores whether the check
    passed and the worst violation magnitude.
    """
    if s_samples is None:
        s_samples = np.linspace(0.0, s_max, 2001)
    s = np.sort(np.asarray(s_samples, dtype=float))
    rep = ProfileReport()
    sig, a = profile.sigma, profile.fprime_at_zero
    tol = 1e-12

    rep.add("f(0)=0", abs(float(profile.f(0.0))) - tol)
    fp = profile.fprime(s)
    rep.add("f' nondecreasing", float(np.max(-np.diff(fp), initial=0.0)) - tol)
    upper = s > sig
    fpp = profile.fsecond(s[upper & (s > 0)])
    rep.add("f'' >= 0", float(np.max(-fpp, initial=0.0)) - tol if fpp.size else 0.0)
    ratio = float(profile.f(big_s)) / big_s
    rep.add("superlinear", big_m - ratio)
    rep.add("regime exclusive", 1.0 if (sig > 0 and a > 0) else 0.0)

    if a > 0:
        rep.add("f'(0)>0", tol - a)
        pos = s[s > 0]
        rep.add("f''>0 on s>0", float(np.max(-profile.fsecond(pos), initial=-1.0)) + tol)
    else:
        flat = s[s <= sig]
        rep.add("f'=0 on [0,sigma]", float(np.max(np.abs(profile.fprime(flat)), initial=0.0)) - tol)
        above = s[s > sig]
        if above.size:
            rep.add("f'>0 on s>sigma", tol - float(np.min(profile.fprime(above))))
            rep.add("f''>0 on s>sigma", tol - float(np.min(profile.fsecond(above))))
    return rep
