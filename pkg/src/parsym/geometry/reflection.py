"""Reflections across lines and the moving-plane sweep over a domain."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GeometryError, PreconditionError
from . import polygon as pg
from .domain import Domain, Grid, ScalarField

MIN_CELLS_ACROSS = 64


@dataclass(frozen=True)
class ReflectionFrame:
    """The line ``{x : x.xi = lam}`` with unit normal ``xi``."""

    xi: tuple
    lam: float

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        n = float(np.hypot(*xi))
        if n == 0:
            raise GeometryError("direction must be nonzero")
        object.__setattr__(self, "xi", tuple(xi / n))

    @classmethod
    def from_angle(cls, theta, lam=0.0):
        return cls((np.cos(theta), np.sin(theta)), lam)

    @property
    def normal(self) -> np.ndarray:
        return np.array(self.xi)

    def at(self, lam) -> "ReflectionFrame":
        return ReflectionFrame(self.xi, float(lam))

    def side(self, points) -> np.ndarray:
        """``x.xi - lam``; positive on the cap side."""
        return np.asarray(points, dtype=float) @ self.normal - self.lam

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        xi = self.normal
        return p + 2.0 * (self.lam - p @ xi)[..., None] * xi


def reflect(obj, frame: ReflectionFrame):
    """Mirror a point array, a :class:`Domain` or a :class:`ScalarField`.

    A field ``u`` maps to ``u^lam(x) = u(R x)`` on the same grid, read by
    bilinear interpolation at the pulled-back position; nodes whose preimage
    is off the data mask are masked out.
    """
    if isinstance(obj, ScalarField):
        grid = obj.grid
        pre = frame.apply(grid.nodes)
        vals = obj.sample(pre)
        src = ScalarField(obj.mask.astype(float), obj.domain, np.ones(grid.shape, bool))
        mask = np.isfinite(vals) & (src.sample(pre) > 0.999)
        vals = np.where(mask, vals, 0.0)
        return ScalarField(vals, obj.domain, mask, obj.name + "^R")
    if isinstance(obj, Domain):
        poly = frame.apply(obj.polygon)[::-1]
        lo, hi = poly.min(0), poly.max(0)
        return Domain(poly, Grid.covering(lo, hi, obj.h), name=obj.name + "^R")
    return frame.apply(obj)


@dataclass
class CriticalConfiguration:
    """Outcome of sweeping the line ``x.xi = lam`` from ``lambda_bar`` downwards.

    ``case`` is one of ``"symmetric"``, ``"tangency"``, ``"orthogonality"``
    or ``"ambiguous"``. ``P`` is an interior tangency point off the line and
    ``Q`` an orthogonal contact point on it; in the ambiguous case both are set.
    """

    xi: np.ndarray
    lambda_bar: float
    lambda_star: float
    midline: float
    case: str
    P: np.ndarray = None
    Q: np.ndarray = None
    self_hausdorff: float = np.nan
    violators: int = 0
    tol: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def symmetric(self) -> bool:
        return self.case == "symmetric"

    def as_dict(self):
        d = {
            "xi": f"{self.xi[0]:.6f} {self.xi[1]:.6f}",
            "lambda_bar": self.lambda_bar,
            "lambda_star": self.lambda_star,
            "midline": self.midline,
            "case": self.case,
            "self_hausdorff": self.self_hausdorff,
            "violators": self.violators,
        }
        for key in ("P", "Q"):
            pt = getattr(self, key)
            if pt is not None:
                d[key] = f"{pt[0]:.6f} {pt[1]:.6f}"
        return d


class _Containment:
    """Toleranced test of ``R_lam(G_lam)`` inside ``G`` on boundary samples."""

    def __init__(self, G: Domain, xi, tol):
        self.samples = G.boundary_samples(G.h / 2)
        self.xi = np.asarray(xi, float)
        self.proj = self.samples @ self.xi
        self.sd = ScalarField(G.node_sd, G, np.ones(G.grid.shape, bool), "sd")
        self.tol = tol

    def reflected(self, lam):
        cap = self.proj > lam
        x = self.samples[cap]
        return x, x + 2.0 * (lam - self.proj[cap])[:, None] * self.xi

    def depth(self, lam):
        x, rx = self.reflected(lam)
        d = self.sd.sample(rx)
        return x, rx, np.where(np.isfinite(d), d, -np.inf)

    def holds(self, lam) -> bool:
        _, _, d = self.depth(lam)
        return bool(np.all(d >= -self.tol))


def caps_and_critical_lambda(G: Domain, xi, tol=None, dead_band=None) -> CriticalConfiguration:
    """Locate ``lambda*`` for direction ``xi`` and classify the critical position.

    The sweep steps down from ``lambda_bar = max x.xi`` by ``h/2`` until the
    reflected cap first leaves ``G`` (boundary samples at spacing ``h/2``,
    tolerance ``h``), then bisects the last bracket. The reflected cap can
    never fit once ``lam`` is below the midpoint of the ``xi``-extent, so the
    sweep stops there.
    """
    h = G.h
    tol = h if tol is None else tol
    band = 2 * h if dead_band is None else dead_band
    xi = np.asarray(xi, float)
    xi = xi / np.hypot(*xi)
    proj = G.polygon @ xi
    lam_bar, lam_min = float(proj.max()), float(proj.min())
    if (lam_bar - lam_min) / h < MIN_CELLS_ACROSS:
        raise PreconditionError(
            f"grid too coarse: {(lam_bar - lam_min) / h:.0f} cells across, need {MIN_CELLS_ACROSS}"
        )
    mid = 0.5 * (lam_bar + lam_min)
    test = _Containment(G, xi, tol)

    lo_limit = mid - 2 * h
    ok_lam = lam_bar
    bad_lam = None
    lam = lam_bar - h / 2
    while lam >= lo_limit:
        if test.holds(lam):
            ok_lam = lam
            lam -= h / 2
        else:
            bad_lam = lam
            break
    if bad_lam is None:
        bad_lam = lo_limit
        if test.holds(bad_lam):
            ok_lam = bad_lam
    if ok_lam > bad_lam:
        lo, hi = bad_lam, ok_lam
        for _ in range(30):
            m = 0.5 * (lo + hi)
            if test.holds(m):
                hi = m
            else:
                lo = m
        lam_star, lam_fail = hi, lo
    else:
        lam_star = lam_fail = bad_lam

    frame = ReflectionFrame(tuple(xi), lam_star)
    samples = test.samples
    haus = float(np.max(np.abs(test.sd.sample(frame.apply(samples)))))

    cfg = CriticalConfiguration(xi, lam_bar, lam_star, mid, "symmetric", self_hausdorff=haus, tol=tol)
    if abs(lam_star - mid) <= band and haus <= 2 * h:
        return cfg

    x, rx, d = test.depth(lam_fail)
    bad = d < -tol
    if not bad.any():
        # fall back to the deepest near-contact at lambda*
        x, rx, d = test.depth(lam_star)
        bad = d <= np.min(d) + 1e-12
        cfg.notes.append("no strict violator below lambda*; using deepest contact")
    cfg.violators = int(bad.sum())
    dist = np.abs(x[bad] @ xi - lam_fail)
    far, near = dist > band, dist <= band
    order = np.argsort(d[bad])
    xb, rxb = x[bad][order], rx[bad][order]
    far, near = far[order], near[order]
    if far.any():
        P = rxb[far][0]
        foot, _, _ = pg.nearest_on_boundary(P, G.polygon)
        cfg.P = foot
    if near.any():
        q = xb[near][0]
        cfg.Q = q - (q @ xi - lam_star) * xi
    if cfg.P is not None and cfg.Q is not None:
        cfg.case = "ambiguous"
    elif cfg.P is not None:
        cfg.case = "tangency"
    else:
        cfg.case = "orthogonality"
    return cfg
