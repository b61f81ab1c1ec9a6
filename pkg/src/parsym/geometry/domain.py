"""Planar domains on raster grids, nodal fields, and level sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from skimage import measure

from ..errors import EmptyLevelSetError, GeometryError, PreconditionError, TopologyError, UndefinedNormalError
from . import polygon as pg

GRID_MARGIN = 2


@dataclass(frozen=True)
class Grid:
    """Uniform node lattice ``x = ox + i*h``, ``y = oy + j*h``.

    Arrays over the grid are indexed ``[j, i]`` (row = y).
    """

    ox: float
    oy: float
    h: float
    nx: int
    ny: int

    @classmethod
    def covering(cls, lo, hi, h, margin=GRID_MARGIN + 1) -> "Grid":
        """Grid aligned to integer multiples of ``h`` covering ``[lo, hi]`` with a margin."""
        i0 = int(np.floor(lo[0] / h)) - margin
        j0 = int(np.floor(lo[1] / h)) - margin
        i1 = int(np.ceil(hi[0] / h)) + margin
        j1 = int(np.ceil(hi[1] / h)) + margin
        return cls(i0 * h, j0 * h, float(h), i1 - i0 + 1, j1 - j0 + 1)

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def size(self):
        return self.nx * self.ny

    @cached_property
    def xs(self):
        return self.ox + self.h * np.arange(self.nx)

    @cached_property
    def ys(self):
        return self.oy + self.h * np.arange(self.ny)

    @cached_property
    def nodes(self) -> np.ndarray:
        """``(ny, nx, 2)`` node coordinates."""
        x, y = np.meshgrid(self.xs, self.ys)
        return np.stack([x, y], axis=-1)

    @property
    def extent(self):
        return (self.ox, self.ox + (self.nx - 1) * self.h, self.oy, self.oy + (self.ny - 1) * self.h)

    def to_index(self, points):
        """Fractional ``(i, j)`` index coordinates of points."""
        p = np.asarray(points, dtype=float)
        return (p[..., 0] - self.ox) / self.h, (p[..., 1] - self.oy) / self.h

    def same_as(self, other) -> bool:
        return (self.nx, self.ny) == (other.nx, other.ny) and np.allclose(
            (self.ox, self.oy, self.h), (other.ox, other.oy, other.h), rtol=0, atol=1e-12 * max(1.0, self.h)
        )


class Domain:
    """A simple counter-clockwise polygon together with the grid it is sampled on."""

    def __init__(self, polygon, grid: Grid, name: str = "polygon", check_margin: bool = True):
        poly = pg.dedupe(np.asarray(polygon, dtype=float))
        if len(poly) < 3:
            raise GeometryError("polygon needs at least three vertices")
        poly = pg.orient_ccw(poly)
        if not pg.is_simple(poly):
            raise GeometryError("polygon is not simple")
        self.polygon = poly
        self.grid = grid
        self.name = name
        if check_margin:
            x0, x1, y0, y1 = grid.extent
            lo, hi = poly.min(0), poly.max(0)
            m = GRID_MARGIN * grid.h * (1 - 1e-9)
            if lo[0] - x0 < m or lo[1] - y0 < m or x1 - hi[0] < m or y1 - hi[1] < m:
                raise GeometryError("grid must cover the polygon with a margin of two cells")

    @classmethod
    def from_polygon(cls, polygon, h=None, cells=None, name="polygon") -> "Domain":
        """Build a domain with an aligned grid of spacing ``h`` (or ``cells`` across the longer side)."""
        poly = np.asarray(polygon, dtype=float)
        lo, hi = poly.min(0), poly.max(0)
        if h is None:
            if cells is None:
                raise ValueError("give either h or cells")
            h = float(np.max(hi - lo)) / cells
        return cls(poly, Grid.covering(lo, hi, h), name=name)

    def with_grid(self, grid: Grid) -> "Domain":
        return Domain(self.polygon, grid, self.name)

    def __repr__(self):
        g = self.grid
        return f"Domain({self.name!r}, vertices={len(self.polygon)}, grid={g.nx}x{g.ny}, h={g.h:.4g})"

    @property
    def h(self) -> float:
        return self.grid.h

    @cached_property
    def area(self) -> float:
        return pg.signed_area(self.polygon)

    @cached_property
    def perimeter(self) -> float:
        return pg.perimeter(self.polygon)

    @cached_property
    def centroid(self) -> np.ndarray:
        return pg.centroid(self.polygon)

    def signed_distance(self, points) -> np.ndarray:
        return pg.signed_distance(points, self.polygon)

    def contains(self, points) -> np.ndarray:
        return self.signed_distance(points) > 0

    @cached_property
    def node_sd(self) -> np.ndarray:
        """Signed distance at every grid node, ``(ny, nx)``."""
        return pg.signed_distance(self.grid.nodes, self.polygon)

    @cached_property
    def inside(self) -> np.ndarray:
        return self.node_sd > 0

    def boundary_samples(self, spacing=None) -> np.ndarray:
        return pg.resample(self.polygon, spacing or self.h / 2)


@dataclass
class ScalarField:
    """Nodal values on a domain's grid; ``mask`` marks nodes that carry data."""

    values: np.ndarray
    domain: Domain
    mask: np.ndarray = None
    name: str = "field"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.grid.shape:
            raise GeometryError(f"field shape {self.values.shape} does not match grid {self.domain.grid.shape}")
        if self.mask is None:
            self.mask = self.domain.inside.copy()

    @property
    def grid(self) -> Grid:
        return self.domain.grid

    @property
    def h(self) -> float:
        return self.domain.grid.h

    @classmethod
    def from_function(cls, domain, func, name="field", mask=None) -> "ScalarField":
        xy = domain.grid.nodes
        return cls(np.asarray(func(xy[..., 0], xy[..., 1]), dtype=float), domain, mask, name)

    @classmethod
    def zeros(cls, domain, name="field") -> "ScalarField":
        return cls(np.zeros(domain.grid.shape), domain, None, name)

    def copy(self, values=None, name=None) -> "ScalarField":
        v = self.values.copy() if values is None else np.asarray(values, dtype=float)
        return ScalarField(v, self.domain, self.mask.copy(), name or self.name)

    def masked_values(self) -> np.ndarray:
        return self.values[self.mask]

    def max(self) -> float:
        return float(np.nanmax(self.masked_values()))

    def min(self) -> float:
        return float(np.nanmin(self.masked_values()))

    def sample(self, points) -> np.ndarray:
        """Bilinear interpolation; ``nan`` outside the grid."""
        g = self.grid
        fi, fj = g.to_index(points)
        ok = (fi >= 0) & (fj >= 0) & (fi <= g.nx - 1) & (fj <= g.ny - 1)
        i0 = np.clip(np.floor(fi).astype(int), 0, g.nx - 2)
        j0 = np.clip(np.floor(fj).astype(int), 0, g.ny - 2)
        tx, ty = fi - i0, fj - j0
        v = self.values
        out = (
            (1 - tx) * (1 - ty) * v[j0, i0]
            + tx * (1 - ty) * v[j0, i0 + 1]
            + (1 - tx) * ty * v[j0 + 1, i0]
            + tx * ty * v[j0 + 1, i0 + 1]
        )
        return np.where(ok, out, np.nan)

    def gradient_magnitude_max(self) -> float:
        gy, gx = np.gradient(np.where(self.mask, self.values, np.nan), self.h)
        return float(np.nanmax(np.hypot(gx, gy)))

    def interpolation_error(self) -> float:
        """Bilinear interpolation error bound ``h**2 * max|D^2 v| / 8`` from second differences."""
        v = np.where(self.mask, self.values, np.nan)
        h = self.h
        dxx = (v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]) / h**2
        dyy = (v[2:, :] - 2 * v[1:-1, :] + v[:-2, :]) / h**2
        curv = max(float(np.nanmax(np.abs(dxx), initial=0.0)), float(np.nanmax(np.abs(dyy), initial=0.0)))
        return h * h * curv / 8.0


@dataclass
class LevelSet:
    """Piecewise-linear curves of a field at a level."""

    curves: list
    closed: list
    level: float
    source: str = "field"

    @property
    def empty(self) -> bool:
        return len(self.curves) == 0

    def __len__(self):
        return len(self.curves)

    def vertices(self) -> np.ndarray:
        if self.empty:
            return np.zeros((0, 2))
        return np.vstack(self.curves)

    def length(self) -> float:
        tot = 0.0
        for c, closed in zip(self.curves, self.closed):
            pts = np.vstack([c, c[:1]]) if closed else c
            tot += float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))
        return tot

    def enclosed_area(self) -> float:
        return float(sum(abs(pg.signed_area(c)) for c, cl in zip(self.curves, self.closed) if cl))


def level_set(values, grid: Grid, level, source="field", mask=None) -> LevelSet:
    """Marching-squares extraction of ``{values = level}`` (linear interpolation on grid edges)."""
    arr = np.asarray(values, dtype=float)
    contours = measure.find_contours(arr, level, mask=mask)
    curves, closed = [], []
    for c in contours:
        xy = np.column_stack([grid.ox + grid.h * c[:, 1], grid.oy + grid.h * c[:, 0]])
        is_closed = len(xy) > 3 and np.allclose(xy[0], xy[-1], atol=1e-12)
        if is_closed:
            xy = xy[:-1]
        if len(xy) < 2:
            continue
        if is_closed:
            xy = pg.orient_ccw(xy)
        curves.append(xy)
        closed.append(bool(is_closed))
    return LevelSet(curves, closed, float(level), source)


def distance_field(domain: Domain) -> ScalarField:
    """Exact distance to the complement at every node (0 outside)."""
    return ScalarField(np.maximum(domain.node_sd, 0.0), domain, domain.inside.copy(), "d")


def parallel_surface(domain: Domain, delta: float) -> LevelSet:
    """``{d = delta}``; empty when ``delta`` is at least the inradius."""
    if delta <= 0:
        raise PreconditionError("delta must be positive")
    sd = domain.node_sd
    if delta >= sd.max():
        return LevelSet([], [], float(delta), "d")
    return level_set(sd, domain.grid, delta, source="d")


def inner_domain(domain: Domain, delta: float) -> Domain:
    """The domain bounded by the parallel surface at distance ``delta``.

    Raises
    ------
    TopologyError
        Unless the parallel surface is exactly one closed curve.
    """
    ls = parallel_surface(domain, delta)
    if ls.empty:
        raise TopologyError(f"parallel surface at delta={delta} is empty")
    if len(ls) != 1 or not ls.closed[0]:
        raise TopologyError(
            f"parallel surface at delta={delta} has {len(ls)} component(s), closed={ls.closed}"
        )
    return Domain(ls.curves[0], domain.grid, name=f"{domain.name}-inner({delta:g})", check_margin=False)


def minkowski_check(G: Domain, delta: float, omega: Domain) -> float:
    """Hausdorff distance between ``boundary(G + B_delta)`` and ``boundary(omega)``.

    The dilation by the disc of radius ``delta`` is the sublevel set
    ``{dist(., G) <= delta}``; its boundary is extracted from the exact
    signed distance of ``G`` on ``omega``'s grid.
    """
    grid = omega.grid
    sd_g = pg.signed_distance(grid.nodes, G.polygon)
    ls = level_set(sd_g, grid, -delta, source="dilation")
    if ls.empty:
        raise EmptyLevelSetError("dilated boundary not found on the grid")
    pts = ls.vertices()
    forward = float(np.max(np.abs(omega.signed_distance(pts))))
    samples = omega.boundary_samples(grid.h / 2)
    backward = 0.0
    for c, closed in zip(ls.curves, ls.closed):
        if len(c) < 3:
            continue
        d = np.abs(pg.signed_distance(samples, c))
        backward = d if isinstance(backward, float) else np.minimum(backward, d)
    backward = float(np.max(backward)) if not isinstance(backward, float) else np.inf
    return max(forward, backward)


CORNER_ANGLE_DEG = 20.0


def boundary_normal(domain: Domain, x0, window=None):
    """Inward unit normal at the boundary point nearest ``x0``.

    The tangent is read off the polyline over an arclength window of ``3h`` on
    each side; if the two one-sided tangents differ by more than
    ``CORNER_ANGLE_DEG`` the point is treated as a corner.
    """
    poly = domain.polygon
    h = domain.h
    w = window or 3 * h
    foot, k, t = pg.nearest_on_boundary(x0, poly)
    _, cum = pg.arclength_point(poly, 0.0)
    seg = cum[k + 1] - cum[k]
    s0 = cum[k] + t * seg
    (back, ahead), _ = pg.arclength_point(poly, np.array([s0 - w, s0 + w]))
    t_back, t_ahead = foot - back, ahead - foot
    nb, na = np.hypot(*t_back), np.hypot(*t_ahead)
    if nb < 1e-14 or na < 1e-14:
        raise UndefinedNormalError("boundary too short to estimate a normal")
    cosang = np.clip(np.dot(t_back, t_ahead) / (nb * na), -1, 1)
    if np.degrees(np.arccos(cosang)) > CORNER_ANGLE_DEG:
        raise UndefinedNormalError(f"corner near {foot}")
    tangent = ahead - back
    tangent /= np.hypot(*tangent)
    return foot, np.array([-tangent[1], tangent[0]])


def interior_sphere_radius(G: Domain, x0, tol=None) -> float:
    """Radius of the largest disc inside ``G`` touching the boundary at ``x0``.

    Scans ``r`` in steps of ``h/2`` for the first failure of
    ``d_G(x0 + r nu) >= r - tol`` (``tol = h**2``) and bisects that bracket.
    """
    h = G.h
    tol = h * h if tol is None else tol
    x0 = np.asarray(x0, dtype=float)
    foot, nu = boundary_normal(G, x0)
    if np.hypot(*(foot - x0)) > h * (1 + 1e-9):
        raise PreconditionError("x0 must lie within h of the boundary")
    lo_all, hi_all = G.polygon.min(0), G.polygon.max(0)
    r_max = float(np.hypot(*(hi_all - lo_all)))
    rs = np.arange(h / 2, r_max + h, h / 2)
    ok = G.signed_distance(foot + rs[:, None] * nu) >= rs - tol
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return float(rs[-1])
    first = bad[0]
    lo = rs[first - 1] if first > 0 else 0.0
    hi = rs[first]
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if G.signed_distance(foot + mid * nu) >= mid - tol:
            lo = mid
        else:
            hi = mid
    return float(lo)


def uniform_interior_radius(G: Domain, spacing=None) -> float:
    """Smallest per-point interior radius over boundary samples (corners skipped)."""
    radii = []
    for x in G.boundary_samples(spacing or 4 * G.h):
        try:
            radii.append(interior_sphere_radius(G, x))
        except UndefinedNormalError:
            continue
    if not radii:
        raise UndefinedNormalError("no boundary point admits a normal")
    return float(min(radii))
