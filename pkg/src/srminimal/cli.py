"""Command line entry point: ``srminimal <subcommand> [--config PATH] [--preset NAME] ...``.

Exit status 0 on success, 2 on configuration errors, 3 on numeric failures; errors
are also written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .characteristics import sweep_surface
from .config import RunConfig, load_config, parse_config
from .errors import ConfigError, GeometryError
from .expr import DomainError, ParseError, to_string
from .geodesics import GeodesicState, classify_group_case, integrate_geodesic, sr_length
from .mesh import fmt
from .structure import contact_check
from .surface import (
    LevelSurface,
    calculus,
    classify_characteristic_point,
    find_characteristic_points,
    minimal_residual_batch,
    project_to_surface,
)

SUBCOMMANDS = ("structure", "residual", "charpoints", "sweep", "geodesic", "classify")
log = logging.getLogger("srminimal")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _floats(a):
    return [float(v) for v in np.ravel(a)]


# -- subcommands --------------------------------------------------------------

def run_structure(cfg: RunConfig, structure) -> dict:
    q = structure.reference_point
    c = structure.structural_constants(q)
    n = structure.n
    table = {}
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(n):
                table[f"c_{i + 1}{j + 1}^{k + 1}"] = float(c[i, j, k])
    report = {
        "name": structure.name,
        "chart": list(structure.chart),
        "reference_point": _floats(q),
        "orientation": structure.orientation,
        "one_form": _floats(structure.one_form_at(q)),
        "one_form_expr": [to_string(e) for e in structure.one_form],
        "reeb": _floats(structure.frame_matrix(q)[:, -1]),
        "structural_constants": table,
    }
    if n % 2 == 1:
        report["contact_margin"] = contact_check(structure, q)
    return {"structure.json": dumps(report)}


def _surface(cfg: RunConfig, structure) -> LevelSurface:
    if cfg.surface is None:
        raise ConfigError("this subcommand needs a 'surface' block", "/surface")
    try:
        return LevelSurface.parse(cfg.surface.F, structure.chart, cfg.surface.level)
    except ParseError as exc:
        raise ConfigError(f"expression error: {exc}", "/surface/F") from None


def run_residual(cfg: RunConfig, structure) -> dict:
    if cfg.residual is None:
        raise ConfigError("the residual subcommand needs a 'residual' block", "/residual")
    surf = _surface(cfg, structure)
    rc = cfg.residual
    axes = [np.linspace(lo, hi, rc.resolution) for lo, hi in rc.box]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, structure.n)
    calc = calculus(structure, surf)
    pts = project_to_surface(calc, grid)
    fc, x1f, x2f, _ = calc.first(pts)
    keep = (np.abs(fc) < 1e-12) & (np.hypot(x1f, x2f) >= max(rc.min_d1, 1e-8))
    pts = pts[keep]
    res = minimal_residual_batch(structure, surf, pts) if len(pts) else np.zeros(0)
    rows = ["x,y,z,residual"] + [",".join(fmt(v) for v in (*p, r)) for p, r in zip(pts, res)]
    summary = {
        "surface": str(surf),
        "grid_points": int(len(grid)),
        "evaluated": int(len(pts)),
        "skipped": int(len(grid) - len(pts)),
        "max_abs_residual": float(np.max(np.abs(res))) if len(res) else 0.0,
    }
    return {"residual.json": dumps(summary), "residual.csv": "\n".join(rows) + "\n"}


def run_charpoints(cfg: RunConfig, structure) -> dict:
    if cfg.search is None:
        raise ConfigError("the charpoints subcommand needs a 'search' block", "/search")
    surf = _surface(cfg, structure)
    roots = find_characteristic_points(structure, surf, cfg.search.box, cfg.search.resolution)
    reports = [classify_characteristic_point(structure, surf, q, cfg.search.loop_radius).to_dict()
               for q in sorted(roots, key=lambda r: tuple(r))]
    return {"charpoints.json": dumps({"surface": str(surf), "points": reports})}


def run_sweep(cfg: RunConfig, structure) -> dict:
    if cfg.sweep is None:
        raise ConfigError("the sweep subcommand needs a 'sweep' block", "/sweep")
    sw = cfg.sweep
    surf = _surface(cfg, structure) if cfg.surface is not None else None
    mesh = sweep_surface(structure, sw.gamma, sw.phi0, sw.s_range, sw.n_s, sw.t_range, sw.n_t,
                         h=sw.h, surface=surf, box=sw.box)
    info = {
        "shape": list(mesh.shape),
        "t0_index": mesh.t0_index,
        "truncated_strips": [int(i) for i in np.flatnonzero(mesh.truncated)],
        "fold_cells": [[int(i), int(j)] for i, j in np.argwhere(mesh.fold)],
        "ruled": bool(mesh.meta["ruled"]),
    }
    name = cfg.name
    return {f"{name}.obj": mesh.to_obj(), f"{name}.csv": mesh.to_csv(), f"{name}.json": dumps(info)}


def run_geodesic(cfg: RunConfig, structure) -> dict:
    g = cfg.geodesic
    if g is None:
        raise ConfigError("the geodesic subcommand needs a 'geodesic' block", "/geodesic")
    if len(g.q0) != structure.n:
        raise ConfigError("q0 has the wrong dimension", "/geodesic/q0")
    tr = integrate_geodesic(structure, GeodesicState(g.q0, g.psi, g.u3), g.t_range, g.h, g.box)
    rows = ["t,x,y,z,psi,u3"]
    for t, p, psi, u3 in zip(tr.times, tr.points, tr.phi, tr.u3):
        rows.append(",".join(fmt(v) for v in (t, *p, psi, u3)))
    ok = ~np.any(np.isnan(tr.points), axis=1)
    length = sr_length(structure, tr.times[ok], tr.points[ok], tr.velocities(structure)[ok])
    info = {"length": length, "truncated": tr.truncated, "steps": int(len(tr.times) - 1)}
    return {"geodesic.csv": "\n".join(rows) + "\n", "geodesic.json": dumps(info)}


def run_classify(cfg: RunConfig, structure) -> dict:
    return {"classify.json": dumps(classify_group_case(structure, seed=cfg.seed))}


RUNNERS = {
    "structure": run_structure,
    "residual": run_residual,
    "charpoints": run_charpoints,
    "sweep": run_sweep,
    "geodesic": run_geodesic,
    "classify": run_classify,
}


# -- driver ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srminimal", description="Sub-Riemannian minimal surface toolkit")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON config file or packaged config name (fig1a ... fig2e)")
    p.add_argument("--preset", choices=["heisenberg", "rototranslation"],
                   help="structure preset (overrides the config's structure)")
    p.add_argument("--m", type=int, default=None, help="Heisenberg dimension parameter")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed for random sample points")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _merge(args, cfg: RunConfig) -> RunConfig:
    if args.preset is not None or args.m is not None:
        doc = dict(cfg.raw)
        name = args.preset or (cfg.structure.preset if cfg.structure else None) or "heisenberg"
        s = {"preset": name}
        if args.m is not None:
            if name != "heisenberg":
                raise ConfigError("--m only applies to the heisenberg preset", "/structure/m")
            s["m"] = args.m
        doc["structure"] = s
        if args.seed is not None:
            doc["seed"] = args.seed
        cfg = parse_config(doc)
    elif args.seed is not None:
        cfg = parse_config({**cfg.raw, "seed": args.seed})
    if cfg.structure is None:
        raise ConfigError("no structure given (use --preset or a 'structure' block)", "/structure")
    return cfg


def execute(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else parse_config({})
        cfg = _merge(args, cfg)
        structure = cfg.structure.build()
        artifacts = RUNNERS[args.command](cfg, structure)
    except ConfigError as exc:
        _fail("config", str(exc), exc.pointer)
        return 2
    except (GeometryError, DomainError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _fail("numeric", str(exc), None, type(exc).__name__)
        return 3

    out = args.out or cfg.out_dir
    if args.command == "structure":
        sys.stdout.write(artifacts["structure.json"])
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        for name, text in artifacts.items():
            (d / name).write_text(text)
        (d / "config.effective.json").write_text(dumps(cfg.effective()))
    elif args.command != "structure":
        for name, text in artifacts.items():
            if name.endswith(".json"):
                sys.stdout.write(text)
    return 0


def _fail(kind: str, message: str, pointer, exc_type: str | None = None) -> None:
    err = {"error": kind, "message": message}
    if pointer:
        err["pointer"] = pointer
    if exc_type:
        err["type"] = exc_type
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")


def main() -> None:
    sys.exit(execute())


if __name__ == "__main__":
    main()
