"""Polygon primitives: exact distances, orientation, simplicity, resampling.

Polygons are ``(M, 2)`` float arrays of vertices, closed implicitly (the
last vertex connects back to the first).
"""

from __future__ import annotations

import numpy as np

from ..errors import GeometryError

_PAIR_BUDGET = 2_000_000


def signed_area(poly) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def perimeter(poly) -> float:
    return float(np.sum(np.hypot(*(np.roll(poly, -1, axis=0) - poly).T)))


def centroid(poly) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def orient_ccw(poly) -> np.ndarray:
    poly = np.asarray(poly, dtype=float)
    return poly[::-1].copy() if signed_area(poly) < 0 else poly


def dedupe(poly, tol=1e-12) -> np.ndarray:
    """Drop consecutive duplicate vertices, including a repeated closing vertex."""
    poly = np.asarray(poly, dtype=float)
    step = np.hypot(*(np.roll(poly, -1, axis=0) - poly).T)
    keep = step > tol
    if not keep.any():
        raise GeometryError("degenerate polygon")
    return poly[keep]


def signed_distance(points, poly) -> np.ndarray:
    """Exact Euclidean distance to the polygon boundary, positive inside.

    Evaluated by point-segment minimisation over every edge; membership by
    the even-odd crossing rule.
    """
    pts = np.asarray(points, dtype=float)
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, 2)
    a = np.asarray(poly, dtype=float)
    b = np.roll(a, -1, axis=0)
    ax, ay = a[:, 0], a[:, 1]
    abx, aby = b[:, 0] - ax, b[:, 1] - ay
    len2 = np.maximum(abx * abx + aby * aby, 1e-300)
    # rows with ay == by never satisfy the crossing condition, so the guard value is harmless
    slope = np.where(aby != 0, abx / np.where(aby != 0, aby, 1.0), 0.0)
    upper_a = ay

    out = np.empty(len(pts))
    chunk = max(1, _PAIR_BUDGET // len(a))
    for lo in range(0, len(pts), chunk):
        p = pts[lo : lo + chunk]
        px, py = p[:, :1], p[:, 1:]
        apx, apy = px - ax, py - ay
        t = np.clip((apx * abx + apy * aby) / len2, 0.0, 1.0)
        dx, dy = apx - t * abx, apy - t * aby
        d = np.sqrt(np.min(dx * dx + dy * dy, axis=1))
        crosses = (upper_a > py) != (b[:, 1] > py)
        xint = ax + (py - ay) * slope
        inside = (np.count_nonzero(crosses & (px < xint), axis=1) % 2).astype(bool)
        out[lo : lo + chunk] = np.where(inside, d, -d)
    return out.reshape(shape)


def nearest_on_boundary(point, poly):
    """Closest boundary point, its edge index and the parameter along that edge."""
    p = np.asarray(point, dtype=float)
    a = poly
    ab = np.roll(poly, -1, axis=0) - a
    len2 = np.maximum((ab * ab).sum(1), 1e-300)
    t = np.clip(((p - a) * ab).sum(1) / len2, 0.0, 1.0)
    foot = a + t[:, None] * ab
    k = int(np.argmin(((foot - p) ** 2).sum(1)))
    return foot[k], k, float(t[k])


def _segments_intersect(p1, p2, q1, q2):
    def orient(a, b, c):
        return np.sign((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    return (o1 * o2 < 0) & (o3 * o4 < 0)


def is_simple(poly) -> bool:
    """True when no two non-adjacent edges cross properly."""
    a = np.asarray(poly, dtype=float)
    m = len(a)
    if m < 3:
        return False
    b = np.roll(a, -1, axis=0)
    idx = np.arange(m)
    chunk = max(1, _PAIR_BUDGET // m)
    for lo in range(0, m, chunk):
        i = idx[lo : lo + chunk, None]
        hit = _segments_intersect(a[i], b[i], a[None, :], b[None, :])
        gap = np.abs(i - idx[None, :])
        hit &= (gap > 1) & (gap < m - 1)
        if hit.any():
            return False
    return True


def resample(poly, spacing) -> np.ndarray:
    """Points along the closed boundary at (at most) the given arclength spacing."""
    a = np.asarray(poly, dtype=float)
    b = np.roll(a, -1, axis=0)
    seg = np.hypot(*(b - a).T)
    out = []
    for k in range(len(a)):
        n = max(1, int(np.ceil(seg[k] / spacing)))
        t = np.arange(n)[:, None] / n
        out.append(a[k] + t * (b[k] - a[k]))
    return np.vstack(out)


def arclength_point(poly, s):
    """Point at arclength ``s`` (taken modulo the perimeter) from vertex 0."""
    a = np.asarray(poly, dtype=float)
    b = np.roll(a, -1, axis=0)
    seg = np.hypot(*(b - a).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.mod(s, cum[-1])
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(a) - 1)
    t = (s - cum[k]) / np.maximum(seg[k], 1e-300)
    return a[k] + t[..., None] * (b[k] - a[k]), cum
