"""Built-in test shapes as counter-clockwise vertex arrays."""

from __future__ import annotations

import numpy as np

from ..errors import GeometryError


def _arc(center, radius, t0, t1, n, endpoint=False):
    t = np.linspace(t0, t1, n, endpoint=endpoint)
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def disk(R=1.0, center=(0.0, 0.0), n=512):
    return _arc(center, R, 0.0, 2 * np.pi, n)


def ellipse(a=2.0, b=1.0, center=(0.0, 0.0), n=2048):
    t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([center[0] + a * np.cos(t), center[1] + b * np.sin(t)])


def square(L=1.0, origin=(0.0, 0.0)):
    """The square ``[0, L]^2`` translated to ``origin``."""
    x0, y0 = origin
    return np.array([[x0, y0], [x0 + L, y0], [x0 + L, y0 + L], [x0, y0 + L]], dtype=float)


def rounded_square(L=1.0, r=0.25, origin=(0.0, 0.0), n_arc=64):
    """``[0, L]^2`` with corners replaced by quarter circles of radius ``r``."""
    if not 0 < r <= L / 2:
        raise GeometryError("corner radius must lie in (0, L/2]")
    x0, y0 = origin
    centers = [(x0 + L - r, y0 + r), (x0 + L - r, y0 + L - r), (x0 + r, y0 + L - r), (x0 + r, y0 + r)]
    starts = [-np.pi / 2, 0.0, np.pi / 2, np.pi]
    parts = [_arc(c, r, s, s + np.pi / 2, n_arc + 1, endpoint=True) for c, s in zip(centers, starts)]
    return np.vstack(parts)


def stadium(L=1.0, R=0.5, center=(0.0, 0.0), n_arc=128):
    """A rectangle of length ``L`` and height ``2R`` capped by half discs."""
    cx, cy = center
    right = _arc((cx + L / 2, cy), R, -np.pi / 2, np.pi / 2, n_arc + 1, endpoint=True)
    left = _arc((cx - L / 2, cy), R, np.pi / 2, 3 * np.pi / 2, n_arc + 1, endpoint=True)
    return np.vstack([right, left])


def egg(blend=0.3, n=512):
    """Unit half-disc on the left glued to a half ellipse with x semi-axis ``1 + blend``.

    The two halves share vertical tangents at ``(0, +-1)``, so the boundary is
    C^1 with a curvature jump there. ``blend = 0`` gives the unit disc.
    """
    if blend <= -1:
        raise GeometryError("blend must exceed -1")
    m = n // 2
    t = np.linspace(-np.pi / 2, np.pi / 2, m, endpoint=False)
    right = np.column_stack([(1 + blend) * np.cos(t), np.sin(t)])
    t = np.linspace(np.pi / 2, 3 * np.pi / 2, n - m, endpoint=False)
    left = np.column_stack([np.cos(t), np.sin(t)])
    return np.vstack([right, left])


def dumbbell(R=0.5, neck=0.1, gap=0.6, n_arc=256):
    """Two discs of radius ``R`` whose centres are ``2R + gap`` apart, joined by a
    straight neck of half-width ``neck``."""
    if not 0 < neck < R:
        raise GeometryError("neck half-width must lie in (0, R)")
    c = R + gap / 2
    phi = np.arcsin(neck / R)
    # right disc from the lower neck junction round to the upper one
    right = _arc((c, 0.0), R, np.pi + phi, 3 * np.pi - phi, n_arc, endpoint=True)
    left = _arc((-c, 0.0), R, phi, 2 * np.pi - phi, n_arc, endpoint=True)
    return np.vstack([right, left])


SHAPES = {
    "disk": disk,
    "square": square,
    "ellipse": ellipse,
    "stadium": stadium,
    "egg": egg,
    "rounded-square": rounded_square,
    "dumbbell": dumbbell,
}


def build_shape(name, **params):
    try:
        fn = SHAPES[name]
    except KeyError:
        raise GeometryError(f"unknown shape {name!r}; choose from {sorted(SHAPES)}") from None
    return fn(**params)
