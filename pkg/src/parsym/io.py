"""Plain-text formats for polygons, grid fields, level sets, reports and tables.

Field files start with a header line ``nx ny h ox oy`` followed by ``ny``
rows of ``nx`` values (row ``j`` holds ``y = oy + j*h``); masked nodes are
written as ``nan``. Level-set files hold one ``x y`` block per polyline,
blocks separated by a blank line.
"""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

from .errors import GeometryError
from .geometry.domain import Grid, LevelSet, ScalarField


def save_polygon(path, poly):
    np.savetxt(path, np.asarray(poly), fmt="%.17g")


def load_polygon(path) -> np.ndarray:
    poly = np.loadtxt(path, ndmin=2)
    if poly.shape[1] != 2:
        raise GeometryError(f"{path}: expected two columns")
    return poly


def save_field(path, field: ScalarField):
    g = field.grid
    vals = np.where(field.mask, field.values, np.nan)
    with open(path, "w") as fh:
        fh.write(f"{g.nx} {g.ny} {g.h:.17g} {g.ox:.17g} {g.oy:.17g}\n")
        np.savetxt(fh, vals, fmt="%.17g")


def load_field(path):
    """Return ``(grid, values, mask)`` from a field file."""
    with open(path) as fh:
        head = fh.readline().split()
        nx, ny = int(head[0]), int(head[1])
        h, ox, oy = map(float, head[2:5])
        vals = np.loadtxt(fh, ndmin=2)
    if vals.shape != (ny, nx):
        raise GeometryError(f"{path}: body shape {vals.shape} disagrees with header {(ny, nx)}")
    mask = np.isfinite(vals)
    return Grid(ox, oy, h, nx, ny), np.where(mask, vals, 0.0), mask


def save_levelset(path, ls: LevelSet):
    with open(path, "w") as fh:
        fh.write(f"# level {ls.level:.17g} source {ls.source}\n")
        for curve, closed in zip(ls.curves, ls.closed):
            fh.write(f"# closed {int(closed)}\n")
            np.savetxt(fh, curve, fmt="%.17g")
            fh.write("\n")


def load_levelset(path) -> LevelSet:
    curves, closed, level, source = [], [], np.nan, "file"
    block, flag = [], False

    def flush():
        if block:
            curves.append(np.array(block, dtype=float))
            closed.append(flag)

    for line in Path(path).read_text().splitlines():
        s = line.strip()
        if s.startswith("# level"):
            parts = s.split()
            level = float(parts[2])
            if len(parts) > 4:
                source = parts[4]
        elif s.startswith("# closed"):
            flush()
            block, flag = [], bool(int(s.split()[2]))
        elif not s:
            flush()
            block = []
        else:
            block.append([float(v) for v in s.split()])
    flush()
    return LevelSet(curves, closed, level, source)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def format_report(data: dict) -> str:
    return "".join(f"{k}: {_fmt(v)}\n" for k, v in data.items())


def save_report(path, data: dict):
    Path(path).write_text(format_report(data))


def load_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if ":" in line:
            k, v = line.split(":", 1)
            out[k.strip()] = v.strip()
    return out


def save_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
