"""Batch driver: ``parsym CONFIG [--section.key value ...]``.

The configuration is an INI-style ``key = value`` file with the sections
``experiment``, ``domain``, ``profile``, ``solver``, ``cheeger``, ``radial``
and ``analysis``. Any key can be overridden on the command line as
``--section.key value`` or, if the key name is unique across sections,
``--key value``. Every file written to the output directory is listed with
its SHA-256 checksum in ``manifest.txt``.

Exit status: 0 success, 2 precondition failure, 3 non-convergence,
4 the symmetry probe returned an asymmetric verdict, 1 anything else.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, cheeger, io, solver
from .errors import NonConvergenceError, ParsymError, PreconditionError
from .geometry import Domain, build_shape, inner_domain, level_set, parallel_surface
from .profile import load_profile_table, make_profile

log = logging.getLogger("parsym")

TASKS = ("solve", "radial", "cheeger", "levelset", "parallel-check", "probe", "oscillation", "compare")
EXIT_OK, EXIT_OTHER, EXIT_PRECONDITION, EXIT_NONCONVERGENCE, EXIT_ASYMMETRIC = 0, 1, 2, 3, 4
MIN_CELLS, MAX_CELLS = 64, 1024

DEFAULTS = {
    "experiment": {"task": "solve", "seed": "0", "output": "out"},
    "domain": {"shape": "disk", "polygon": "", "cells": "128", "h": ""},
    "profile": {"kind": "power", "p": "2"},
    "solver": {"algorithm": "auto", "rel_tol": "1e-8", "max_iter": "500", "init": "zero", "challenge": "true"},
    "cheeger": {"restarts": "8", "max_iter": "4000", "tol": "2e-3"},
    "radial": {"R": "1", "N": "2", "points": "101"},
    "analysis": {
        "delta": "0.3",
        "c": "auto",
        "levels": "",
        "deltas": "0.05,0.1,0.2,0.4",
        "directions": "16",
        "trials": "20",
        "tol": "",
        "require_parallel": "false",
        "shift": "",
    },
}

# keys of these sections that are not shape/profile parameters
_DOMAIN_KEYS = {"shape", "polygon", "cells", "h"}
_PROFILE_KEYS = {"kind", "table"}


def _num(s):
    try:
        v = float(s)
    except ValueError:
        return s
    return int(v) if v.is_integer() and "." not in s and "e" not in s.lower() else v


def _bool(s) -> bool:
    return str(s).strip().lower() in ("1", "true", "yes", "on")


def _floats(s):
    return [float(x) for x in str(s).replace(",", " ").split()] if str(s).strip() else []


@dataclass
class ExperimentConfig:
    """Parsed configuration; ``sections`` maps section -> key -> string value."""

    sections: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    @property
    def task(self) -> str:
        return self.get("experiment", "task")

    @property
    def seed(self) -> int:
        return int(self.get("experiment", "seed"))

    @property
    def output(self) -> Path:
        out = Path(self.get("experiment", "output"))
        return out if out.is_absolute() else self.base_dir / out

    def validate(self):
        if self.task not in TASKS:
            raise PreconditionError(f"task must be exactly one of {TASKS}, got {self.task!r}")
        poly = self.get("domain", "polygon")
        if poly and not self._path(poly).is_file():
            raise PreconditionError(f"polygon file {poly} does not exist")
        table = self.get("profile", "table")
        if table and not self._path(table).is_file():
            raise PreconditionError(f"profile table {table} does not exist")

    def _path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    # --- builders ---------------------------------------------------------------

    def polygon(self):
        d = self.sections["domain"]
        if d.get("polygon"):
            return io.load_polygon(self._path(d["polygon"])), Path(d["polygon"]).stem
        params = {k: _num(v) for k, v in d.items() if k not in _DOMAIN_KEYS and v != ""}
        for k in ("center", "origin"):
            if k in params:
                params[k] = tuple(_floats(params[k]))
        return build_shape(d["shape"], **params), d["shape"]

    def domain(self) -> Domain:
        poly, name = self.polygon()
        d = self.sections["domain"]
        width = float(np.max(poly.max(0) - poly.min(0)))
        h = float(d["h"]) if d.get("h") else width / int(d["cells"])
        extent = poly.max(0) - poly.min(0)
        cells = extent / h
        if np.any(cells < MIN_CELLS * (1 - 1e-9)) or np.any(cells > MAX_CELLS * (1 + 1e-9)):
            raise PreconditionError(
                f"resolution {cells[0]:.0f} x {cells[1]:.0f} cells is outside [{MIN_CELLS}, {MAX_CELLS}] per axis"
            )
        return Domain.from_polygon(poly, h=h, name=name)

    def profile(self):
        p = self.sections["profile"]
        kind = p["kind"]
        params = {k: _num(v) for k, v in p.items() if k not in _PROFILE_KEYS and v != ""}
        if kind == "custom":
            return make_profile(kind, table=load_profile_table(self._path(p["table"])))
        return make_profile(kind, **params)

    def solve_config(self) -> solver.SolveConfig:
        s = self.sections["solver"]
        return solver.SolveConfig(
            algorithm=s["algorithm"],
            rel_tol=float(s["rel_tol"]),
            max_iter=int(s["max_iter"]),
            init=s["init"],
            seed=self.seed,
            challenge=_bool(s["challenge"]),
        )


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Merge defaults, an optional file and ``(key, value)`` overrides."""
    sections = {s: dict(v) for s, v in DEFAULTS.items()}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise PreconditionError(f"configuration file {path} does not exist")
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read(path)
        for sec in cp.sections():
            sections.setdefault(sec, {}).update(dict(cp[sec]))
        base = path.parent.resolve()
    for key, value in overrides:
        if "." in key:
            sec, k = key.split(".", 1)
        else:
            owners = [s for s, kv in sections.items() if key in kv]
            if len(owners) != 1:
                raise PreconditionError(f"flag --{key} is ambiguous or unknown; use --section.{key}")
            sec, k = owners[0], key
        sections.setdefault(sec, {})[k] = value
    cfg = ExperimentConfig(sections, base)
    cfg.validate()
    return cfg


class _Outputs:
    """Tracks every written artifact for the manifest."""

    def __init__(self, root: Path):
        self.root = root
        root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name) -> Path:
        self.files.append(name)
        return self.root / name

    def report(self, data, name="report.txt"):
        io.save_report(self.path(name), data)

    def manifest(self):
        lines = [f"{io.sha256(self.root / f)}  {f}\n" for f in self.files if (self.root / f).is_file()]
        (self.root / "manifest.txt").write_text("".join(lines))


def _solve(cfg, out, dom=None, profile=None):
    dom = dom or cfg.domain()
    profile = profile or cfg.profile()
    res = solver.minimize(dom, profile, config=cfg.solve_config())
    io.save_field(out.path("u.field"), res.u)
    return dom, profile, res


def _level_list(cfg, umax):
    levels = _floats(cfg.get("analysis", "levels", ""))
    return levels or list(np.linspace(0.1, 0.9, 5) * umax)


def _task_solve(cfg, out):
    dom, profile, res = _solve(cfg, out)
    rep = {"task": "solve", "domain": dom.name, "h": dom.h, "profile": profile.kind.value}
    rep.update(res.summary())
    rep.update({k: v for k, v in res.challenge.items() if k != "winner"})
    out.report(rep)
    io.save_csv(out.path("history.csv"), ["iteration", "energy"], list(enumerate(res.history)))
    if res.stages:
        io.save_csv(out.path("stages.csv"), ["eps", "energy", "iterations"],
                    [(s["eps"], s["energy"], s["iterations"]) for s in res.stages])
    return EXIT_OK


def _task_radial(cfg, out):
    profile = cfg.profile()
    R, N = float(cfg.get("radial", "R")), int(cfg.get("radial", "N"))
    r = np.linspace(0.0, R, int(cfg.get("radial", "points")))
    u = solver.radial_solution(profile, R, N, r)
    io.save_csv(out.path("radial.csv"), ["r", "u"], list(zip(r, u)))
    out.report({"task": "radial", "profile": profile.kind.value, "R": R, "N": N, "u_at_0": float(u[0])})
    return EXIT_OK


def _task_cheeger(cfg, out):
    dom = cfg.domain()
    c = cfg.sections["cheeger"]
    est = cheeger.cheeger_constant(dom, restarts=int(c["restarts"]), seed=cfg.seed, max_iter=int(c["max_iter"]),
                                   tol=float(c["tol"]))
    rep = {"task": "cheeger", "domain": dom.name, "h": dom.h}
    rep.update(est.as_dict())
    p = cfg.sections["profile"]
    if p.get("kind") == "linear-plus-power":
        zt = cheeger.zero_minimizer_test(cfg.profile(), dom, estimate=est)
        rep.update({f"zero_minimizer_{k}": v for k, v in zt.as_dict().items()})
    out.report(rep)
    io.save_field(out.path("certificate.field"), est.certificate)
    keys = ["start", "grid", "function_ratio", "dual_bound", "iterations", "converged"]
    io.save_csv(out.path("restarts.csv"), keys, [[r[k] for k in keys] for r in est.restarts])
    return EXIT_OK


def _task_levelset(cfg, out):
    dom, profile, res = _solve(cfg, out)
    rows = []
    for k, c in enumerate(_level_list(cfg, res.u.max())):
        ls = level_set(np.where(res.u.mask, res.u.values, 0.0), dom.grid, c, mask=res.u.mask)
        io.save_levelset(out.path(f"level_{k:02d}.txt"), ls)
        rows.append((c, len(ls), ls.length(), ls.enclosed_area()))
    delta = float(cfg.get("analysis", "delta"))
    gam = parallel_surface(dom, delta)
    io.save_levelset(out.path("parallel_surface.txt"), gam)
    io.save_csv(out.path("levels.csv"), ["c", "curves", "length", "enclosed_area"], rows)
    out.report({"task": "levelset", "domain": dom.name, "levels": len(rows), "delta": delta,
                "parallel_surface_curves": len(gam)})
    return EXIT_OK


def _task_parallel(cfg, out):
    dom, profile, res = _solve(cfg, out)
    tol = cfg.get("analysis", "tol")
    tol = float(tol) if tol else None
    c = cfg.get("analysis", "c")
    levels = [float(c)] if c not in ("", "auto") else _level_list(cfg, res.u.max())
    rows, rep = [], {"task": "parallel-check", "domain": dom.name, "h": dom.h}
    for k, lev in enumerate(levels):
        pr = analysis.parallelism_check(res, lev, dom, tol)
        rows.append((lev, pr.d_min, pr.d_max, pr.osc, pr.verdict, pr.tol))
        io.save_levelset(out.path(f"level_{k:02d}.txt"), pr.curve)
    io.save_csv(out.path("parallelism.csv"), ["c", "d_min", "d_max", "osc", "verdict", "tol"], rows)
    rep["verdicts"] = " ".join(r[4] for r in rows)
    rep["max_osc"] = max(r[3] for r in rows)
    out.report(rep)
    return EXIT_OK


def _task_probe(cfg, out):
    dom = cfg.domain()
    profile = cfg.profile()
    a = cfg.sections["analysis"]
    delta = float(a["delta"])
    inner_domain(dom, delta)  # topology gate before the solve
    _, _, res = _solve(cfg, out, dom, profile)
    c = a["c"] if a["c"] in ("", "auto") else float(a["c"])
    rep = analysis.moving_planes_probe(dom, profile, delta, c="auto" if c == "" else c,
                                       directions=int(a["directions"]), require_parallel=_bool(a["require_parallel"]),
                                       result=res, config=cfg.solve_config())
    d = {"task": "probe", "domain": dom.name, "h": dom.h}
    d.update(rep.as_dict())
    out.report(d)
    keys = sorted({k for row in rep.directions for k in row})
    io.save_csv(out.path("directions.csv"), keys, [[row.get(k, "") for k in keys] for row in rep.directions])
    return EXIT_ASYMMETRIC if rep.verdict == "asymmetric" else EXIT_OK


def _task_oscillation(cfg, out):
    dom, profile, res = _solve(cfg, out)
    fit = analysis.oscillation_exponent(dom, profile, _floats(cfg.get("analysis", "deltas")), result=res)
    d = {"task": "oscillation", "domain": dom.name, "h": dom.h}
    d.update(fit.as_dict())
    out.report(d)
    io.save_csv(out.path("oscillation.csv"), ["delta", "osc"], fit.rows())
    return EXIT_OK


def _task_compare(cfg, out):
    dom = cfg.domain()
    profile = cfg.profile()
    a = cfg.sections["analysis"]
    shift = float(a["shift"]) if a.get("shift") else None
    st = analysis.comparison_property_test(dom, profile, int(a["trials"]), seed=cfg.seed,
                                           config=cfg.solve_config(), shift=shift)
    d = {"task": "compare", "domain": dom.name, "h": dom.h}
    d.update(st.as_dict())
    out.report(d)
    keys = ["trial", "status", "max_u0_minus_u1", "tolerance"]
    io.save_csv(out.path("trials.csv"), keys, [[r.get(k, "") for k in keys] for r in st.records])
    return EXIT_OK


_TASKS = {
    "solve": _task_solve,
    "radial": _task_radial,
    "cheeger": _task_cheeger,
    "levelset": _task_levelset,
    "parallel-check": _task_parallel,
    "probe": _task_probe,
    "oscillation": _task_oscillation,
    "compare": _task_compare,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute one task and write the manifest; returns the exit status."""
    out = _Outputs(cfg.output)
    try:
        status = _TASKS[cfg.task](cfg, out)
    finally:
        out.manifest()
    return status


def _split_overrides(extra):
    pairs, it = [], iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise PreconditionError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            try:
                val = next(it)
            except StopIteration:
                raise PreconditionError(f"flag {tok} needs a value") from None
        pairs.append((key, val))
    return pairs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="parsym",
        description="Run one experiment from a key = value configuration. Extra flags "
        "--section.key VALUE (or --key VALUE) override configuration entries.",
    )
    ap.add_argument("config", nargs="?", help="configuration file (must come first)")
    ap.add_argument("-v", "--verbose", action="store_true")
    argv = list(sys.argv[1:] if argv is None else argv)
    head = argv[:1] if argv and not argv[0].startswith("-") else []
    rest = argv[len(head):]
    flags = [a for a in rest if a in ("-h", "--help", "-v", "--verbose")]
    args = ap.parse_args(head + flags)
    extra = [a for a in rest if a not in flags]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, _split_overrides(extra))
        return run(cfg)
    except PreconditionError as exc:
        print(f"parsym: precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except NonConvergenceError as exc:
        print(f"parsym: no convergence: {exc}", file=sys.stderr)
        for k, v in exc.diagnostics.items():
            if np.isscalar(v):
                print(f"  {k}: {v}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ParsymError as exc:
        print(f"parsym: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
