"""Cut-cell P1 discretisation of a polygonal domain on its grid.

Every grid cell is split into its four corner triangles, i.e. the union of
both diagonal triangulations, each counted with weight 1/2. This keeps the
scheme symmetric under the lattice reflections. Triangles that the boundary
crosses are clipped to the domain: the crossing points on triangle edges are
found by exact segment intersection with the polygon and become extra
Dirichlet vertices, and the clipped polygon is fanned into sub-triangles.
Nodes within ``tau*h`` of the boundary are snapped onto it.

The discrete functional is then exact for piecewise-linear ``v``::

    E(v) = sum_K w_K f(|grad_K v|) - sum_j m_j v_j

with ``w_K`` the (half-)triangle areas and ``m_j = sum_{K ni j} w_K / 3``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError
from .geometry.domain import Domain, ScalarField

SNAP = 1e-2
SLIVER = 1e-10

# corner triangles of a cell as (di, dj) offsets, counter-clockwise
_CORNERS = {"00": (0, 0), "10": (1, 0), "01": (0, 1), "11": (1, 1)}
_TRIANGLES = (("00", "10", "01"), ("10", "11", "00"), ("11", "01", "10"), ("01", "00", "11"))

DOF, DIRICHLET, UNUSED = 0, 1, 2


def _p1_gradients(xy):
    """Barycentric gradients for triangles ``xy`` of shape ``(nK, 3, 2)``.

    Returns ``(bx, by, area)`` where ``bx[K, i]`` is the x-derivative of the
    hat function of local vertex ``i``.
    """
    x, y = xy[..., 0], xy[..., 1]
    x1, x2 = np.roll(x, -1, axis=1), np.roll(x, -2, axis=1)
    y1, y2 = np.roll(y, -1, axis=1), np.roll(y, -2, axis=1)
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    bx = (y1 - y2) / area2[:, None]
    by = (x2 - x1) / area2[:, None]
    return bx, by, 0.5 * area2


def _crossings(P, Q, poly):
    """First intersection of each segment ``P -> Q`` with the polygon boundary.

    ``P`` lies inside, ``Q`` outside. Falls back to ``None`` rows when no
    proper intersection is found.
    """
    a = poly
    b = np.roll(poly, -1, axis=0)
    out = np.full(P.shape, np.nan)
    chunk = max(1, 2_000_000 // len(a))
    e = b - a
    for lo in range(0, len(P), chunk):
        p, q = P[lo : lo + chunk, None, :], Q[lo : lo + chunk, None, :]
        r = q - p
        denom = r[..., 0] * e[None, :, 1] - r[..., 1] * e[None, :, 0]
        ap = a[None] - p
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (ap[..., 0] * e[None, :, 1] - ap[..., 1] * e[None, :, 0]) / denom
            u = (ap[..., 0] * r[..., 1] - ap[..., 1] * r[..., 0]) / denom
        ok = (denom != 0) & (t >= -1e-12) & (t <= 1 + 1e-12) & (u >= -1e-12) & (u <= 1 + 1e-12)
        t = np.where(ok, t, np.inf)
        tmin = t.min(axis=1)
        hit = np.isfinite(tmin)
        tmin = np.clip(np.where(hit, tmin, np.nan), 0.0, 1.0)
        out[lo : lo + chunk] = P[lo : lo + chunk] + tmin[:, None] * (Q[lo : lo + chunk] - P[lo : lo + chunk])
    return out


@dataclass
class CutCellMesh:
    """Triangles, operators and node bookkeeping for one domain.

    Attributes
    ----------
    xy : (nV, 2) vertex coordinates; the first ``nx*ny`` are grid nodes
        (flattened ``j*nx + i``), the rest are boundary crossing points.
    kind : (nV,) ``DOF``, ``DIRICHLET`` or ``UNUSED``.
    tri : (nK, 3) vertex indices of the elements.
    w : (nK,) quadrature weights (half the triangle area).
    cell : (nK,) index ``j*(nx-1) + i`` of the grid cell each element lies in.
    Gx, Gy : sparse (nK, nV) element gradient operators.
    m : (nV,) load vector of the constant 1.
    """

    domain: Domain
    xy: np.ndarray
    kind: np.ndarray
    tri: np.ndarray
    w: np.ndarray
    cell: np.ndarray
    Gx: sp.csr_matrix
    Gy: sp.csr_matrix
    m: np.ndarray
    tau: float
    bx: np.ndarray = None
    by: np.ndarray = None

    @classmethod
    def build(cls, domain: Domain, tau: float = SNAP) -> "CutCellMesh":
        g = domain.grid
        nx, ny, h = g.nx, g.ny, g.h
        sd = domain.node_sd.ravel()
        keep = sd >= -tau * h
        strict = sd > tau * h
        nodes = g.nodes.reshape(-1, 2)

        ci, cj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))
        ci, cj = ci.ravel(), cj.ravel()
        corner = {k: (cj + dj) * nx + (ci + di) for k, (di, dj) in _CORNERS.items()}
        kc = np.stack([keep[corner[k]] for k in _CORNERS], axis=1)
        full = kc.all(axis=1)
        cut = kc.any(axis=1) & ~full

        tris, cells = [], []
        for t in _TRIANGLES:
            tris.append(np.stack([corner[k][full] for k in t], axis=1))
            cells.append(np.nonzero(full)[0])
        tri_full = np.concatenate(tris)
        cell_full = np.concatenate(cells)

        # crossing points on every triangle edge of the cut cells
        cut_idx = np.nonzero(cut)[0]
        edges = set()
        for c in cut_idx:
            ids = [corner[k][c] for k in ("00", "10", "01", "11")]
            n00, n10, n01, n11 = ids
            for a, b in ((n00, n10), (n10, n11), (n11, n01), (n01, n00), (n00, n11), (n10, n01)):
                if keep[a] != keep[b] and (strict[a] or strict[b]):
                    edges.add((min(a, b), max(a, b)))
        edges = sorted(edges)
        extra_xy = np.zeros((0, 2))
        cross_id = {}
        if edges:
            e = np.array(edges)
            inside_end = np.where(strict[e[:, 0]], e[:, 0], e[:, 1])
            outside_end = np.where(strict[e[:, 0]], e[:, 1], e[:, 0])
            pts = _crossings(nodes[inside_end], nodes[outside_end], domain.polygon)
            bad = ~np.isfinite(pts[:, 0])
            if bad.any():
                # no exact hit (boundary skims a vertex): interpolate the signed distance
                si, so = sd[inside_end[bad]], sd[outside_end[bad]]
                lam = si / (si - so)
                pts[bad] = nodes[inside_end[bad]] + lam[:, None] * (nodes[outside_end[bad]] - nodes[inside_end[bad]])
            extra_xy = pts
            base = nx * ny
            cross_id = {edge: base + k for k, edge in enumerate(edges)}
        xy = np.vstack([nodes, extra_xy])

        cut_tris, cut_cells = [], []
        for c in cut_idx:
            for t in _TRIANGLES:
                ids = [corner[k][c] for k in t]
                poly = []
                for s in range(3):
                    a, b = ids[s], ids[(s + 1) % 3]
                    if keep[a]:
                        poly.append(a)
                    if keep[a] != keep[b] and (strict[a] or strict[b]):
                        poly.append(cross_id[(min(a, b), max(a, b))])
                if len(poly) < 3:
                    continue
                for s in range(1, len(poly) - 1):
                    cut_tris.append((poly[0], poly[s], poly[s + 1]))
                    cut_cells.append(c)
        if cut_tris:
            tri = np.vstack([tri_full, np.array(cut_tris)])
            cell = np.concatenate([cell_full, np.array(cut_cells)])
        else:
            tri, cell = tri_full, cell_full

        bx, by, area = _p1_gradients(xy[tri])
        good = area > SLIVER * h * h
        tri, cell, bx, by, area = tri[good], cell[good], bx[good], by[good], area[good]
        if len(tri) == 0:
            raise GeometryError("domain covers no grid cell")
        w = 0.5 * area

        nK, nV = len(tri), len(xy)
        rows = np.repeat(np.arange(nK), 3)
        Gx = sp.csr_matrix((bx.ravel(), (rows, tri.ravel())), shape=(nK, nV))
        Gy = sp.csr_matrix((by.ravel(), (rows, tri.ravel())), shape=(nK, nV))
        m = np.bincount(tri.ravel(), weights=np.repeat(w / 3.0, 3), minlength=nV)

        kind = np.full(nV, UNUSED, dtype=np.int8)
        kind[: nx * ny][keep] = DIRICHLET
        kind[: nx * ny][strict] = DOF
        kind[nx * ny :] = DIRICHLET
        kind[(kind == DOF) & (m <= 0)] = DIRICHLET
        return cls(domain, xy, kind, tri, w, cell, Gx, Gy, m, tau, bx, by)

    # --- bookkeeping -------------------------------------------------------

    @property
    def grid(self):
        return self.domain.grid

    @property
    def n_grid(self) -> int:
        return self.grid.nx * self.grid.ny

    @property
    def dofs(self) -> np.ndarray:
        return np.nonzero(self.kind == DOF)[0]

    @property
    def fixed(self) -> np.ndarray:
        return np.nonzero(self.kind == DIRICHLET)[0]

    @property
    def area(self) -> float:
        return float(self.w.sum())

    @property
    def node_mask(self) -> np.ndarray:
        """Grid nodes that carry a value (unknown or prescribed)."""
        return (self.kind[: self.n_grid] != UNUSED).reshape(self.grid.shape)

    def boundary_values(self, data=None) -> np.ndarray:
        """Prescribed values at the Dirichlet vertices.

        ``data`` may be ``None`` (zero), a callable ``(x, y) -> values`` or a
        :class:`ScalarField` sampled bilinearly.
        """
        idx = self.fixed
        if data is None:
            return np.zeros(len(idx))
        pts = self.xy[idx]
        if isinstance(data, ScalarField):
            vals = data.sample(pts)
            return np.where(np.isfinite(vals), vals, 0.0)
        return np.asarray(data(pts[:, 0], pts[:, 1]), dtype=float) * np.ones(len(idx))

    def expand(self, x, gb) -> np.ndarray:
        v = np.zeros(len(self.xy))
        v[self.dofs] = x
        v[self.fixed] = gb
        return v

    def restrict(self, v) -> np.ndarray:
        return np.asarray(v)[self.dofs]

    def from_grid(self, values, data=None) -> np.ndarray:
        """Full vertex vector from node values ``(ny, nx)``; crossings from ``data``."""
        v = np.zeros(len(self.xy))
        v[: self.n_grid] = np.asarray(values, dtype=float).ravel()
        v[self.n_grid :] = 0.0
        fx = self.fixed
        v[fx] = self.boundary_values(data)
        v[self.kind == UNUSED] = 0.0
        return v

    def from_function(self, func) -> np.ndarray:
        """Vertex vector of ``func(x, y)`` (nodal interpolation, including crossings)."""
        v = np.asarray(func(self.xy[:, 0], self.xy[:, 1]), dtype=float) * np.ones(len(self.xy))
        v[self.kind == UNUSED] = 0.0
        return v

    def to_field(self, v, name="u") -> ScalarField:
        vals = np.asarray(v)[: self.n_grid].reshape(self.grid.shape).copy()
        mask = self.node_mask
        vals[~mask] = 0.0
        return ScalarField(vals, self.domain, mask, name)

    # --- discrete calculus ---------------------------------------------------

    def gradients(self, v) -> np.ndarray:
        """Element gradients, shape ``(nK, 2)``."""
        return np.column_stack([self.Gx @ v, self.Gy @ v])

    def cell_gradients(self, v):
        """Weighted average of element gradients per grid cell.

        Returns ``(cell_ids, grads)`` for the cells that carry elements.
        """
        g = self.gradients(v)
        cells, inv = np.unique(self.cell, return_inverse=True)
        wsum = np.bincount(inv, weights=self.w)
        gx = np.bincount(inv, weights=self.w * g[:, 0]) / wsum
        gy = np.bincount(inv, weights=self.w * g[:, 1]) / wsum
        return cells, np.column_stack([gx, gy])

    def cell_centers(self, cells) -> np.ndarray:
        g = self.grid
        i = cells % (g.nx - 1)
        j = cells // (g.nx - 1)
        return np.column_stack([g.ox + (i + 0.5) * g.h, g.oy + (j + 0.5) * g.h])

    def cell_areas(self, cells=None) -> np.ndarray:
        _, inv = np.unique(self.cell, return_inverse=True)
        return np.bincount(inv, weights=self.w)

    def integral(self, v) -> float:
        return float(self.m @ v)

    def stiffness(self, weights=None) -> sp.csr_matrix:
        """``G^T diag(w c) G`` for per-element coefficients ``c`` (default 1)."""
        c = self.w if weights is None else self.w * weights
        D = sp.diags(c)
        return (self.Gx.T @ D @ self.Gx + self.Gy.T @ D @ self.Gy).tocsr()


def get_mesh(domain: Domain, tau: float = SNAP) -> CutCellMesh:
    """The mesh of ``domain``, built once and cached on the domain object."""
    cache = domain.__dict__.setdefault("_meshes", {})
    if tau not in cache:
        cache[tau] = CutCellMesh.build(domain, tau)
    return cache[tau]
