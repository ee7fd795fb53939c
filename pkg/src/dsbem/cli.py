"""Command-line interface.

Subcommands::

    dsbem solve CONFIG          solve one problem, write JSON (and VTK)
    dsbem dtn CONFIG            Dirichlet pair -> Neumann pair
    dsbem ntd CONFIG            Neumann pair -> Dirichlet pair
    dsbem convergence CONFIG    error table over icosphere levels (CSV)
    dsbem mesh-info SOURCE      statistics and validation of a mesh

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
or incompatible data.  Errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, oracle
from .boundary_map import dtn_solution, ntd_solution
from .bvp import PROBLEM_KINDS, IncompatibleDataError, solve
from .mesh import MeshError, SurfaceMesh, distance_to_surface, load_mesh, make_box, make_icosphere, mesh_stats, validate
from .operators import OnSurfaceError, assemble, classify_side
from .quadrature import QuadConfig
from .solvers import SolverError
from .spaces import DensityP0, DensityP1, density_from_json, interpolate_p1, project_to_p0, weak_norm

logger = logging.getLogger("dsbem")

# components prescribed by each problem kind, with their density space
KIND_DATA = {
    "dirichlet": (("f_i", "p1"), ("f_e", "p1")),
    "neumann": (("g_i", "p0"), ("g_e", "p0")),
    "mixed_int_d_ext_n": (("f_i", "p1"), ("g_e", "p0")),
    "mixed_int_n_ext_d": (("g_i", "p0"), ("f_e", "p1")),
}

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_DENSITY = {
    "type": "object",
    "properties": {"p0": {"type": "array", "items": {"type": "number"}}, "p1": {"type": "array", "items": {"type": "number"}}},
    "minProperties": 1,
    "maxProperties": 1,
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["mesh"],
    "additionalProperties": False,
    "properties": {
        "mesh": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["icosphere"],
                    "additionalProperties": False,
                    "properties": {
                        "icosphere": {
                            "type": "object",
                            "additionalProperties": False,
                            "properties": {
                                "level": {"type": "integer", "minimum": 0, "maximum": 7},
                                "radius": {"type": "number", "exclusiveMinimum": 0},
                            },
                        }
                    },
                },
                {
                    "type": "object",
                    "required": ["box"],
                    "additionalProperties": False,
                    "properties": {"box": {"type": "object", "additionalProperties": False,
                                           "properties": {"size": _VEC3, "center": _VEC3}}},
                },
                {
                    "type": "object",
                    "required": ["file"],
                    "additionalProperties": False,
                    "properties": {"file": {"type": "string"}, "format": {"enum": ["off", "obj"]}},
                },
            ]
        },
        "problem": {"enum": list(PROBLEM_KINDS)},
        "data": {
            "type": "object",
            "properties": {
                "preset": {"enum": ["shell", "harmonic", "point_source"]},
                "n": {"type": "integer", "minimum": 0, "maximum": oracle.MAX_DEGREE},
                "m": {"type": "integer"},
                "a": {"type": "number"},
                "b": {"type": "number"},
                "x0_ext": _VEC3,
                "x0_int": _VEC3,
                "f_i": _DENSITY,
                "f_e": _DENSITY,
                "g_i": _DENSITY,
                "g_e": _DENSITY,
            },
            "additionalProperties": False,
        },
        "quadrature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "regular_order": {"type": "integer", "minimum": 1, "maximum": 10},
                "near_order": {"type": "integer", "minimum": 1, "maximum": 10},
                "singular_order": {"type": "integer", "minimum": 1, "maximum": 20},
                "near_ratio": {"type": "number", "minimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["direct", "cg"]},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "compat_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "probes": {"type": "array", "items": _VEC3},
        "grid": {
            "type": "object",
            "required": ["origin", "spacing", "dims"],
            "additionalProperties": False,
            "properties": {
                "origin": _VEC3,
                "spacing": _VEC3,
                "dims": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3, "maxItems": 3},
            },
        },
        "output": {"type": "string"},
        "cache_dir": {"type": "string"},
        "levels": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 7}, "minItems": 1},
    },
}


class CliError(Exception):
    def __init__(self, code: str, message: str, exit_code: int):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


def _schema_error(message: str) -> CliError:
    return CliError("schema_error", message, 1)


# ----------------------------------------------------------------------------
# JSON output with 17 significant digits

_FLOAT_TOKEN = "\x00f"


def _prepare(obj):
    if isinstance(obj, dict):
        return {str(k): _prepare(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_prepare(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return bool(obj) if isinstance(obj, np.bool_) else obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            raise ValueError("non-finite number in output")
        return _FLOAT_TOKEN + format(float(obj), ".17g")
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits."""
    text = json.dumps(_prepare(obj), sort_keys=True, indent=1)
    return re.sub(r'"\\u0000f([^"]*)"', r"\1", text)


def write_json(path: Path, obj) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(obj) + "\n")
    except OSError as exc:
        raise CliError("io_error", f"cannot write {path}: {exc}", 2) from exc


# ----------------------------------------------------------------------------
# configuration


@dataclass
class Context:
    config: dict
    base: Path
    quad: QuadConfig
    tol: float
    method: str
    compat_tol: float
    cache_dir: str | None


def load_config(path: str) -> dict:
    try:
        config = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError("io_error", f"cannot read config {path}: {exc}", 1) from exc
    except json.JSONDecodeError as exc:
        raise _schema_error(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise _schema_error(f"{where}: {exc.message}") from exc
    return config


def _context(args, config: dict, base: Path) -> Context:
    quad = QuadConfig(**config.get("quadrature", {}))
    if args.quad_order is not None:
        k = args.quad_order
        if not 1 <= k <= 10:
            raise CliError("usage_error", "--quad-order must be in 1..10", 1)
        quad = replace(quad, regular_order=k, near_order=min(k + 4, 10), singular_order=k + 2)
    solver = config.get("solver", {})
    tol = args.tol if args.tol is not None else solver.get("tol", 1e-10)
    return Context(config, base, quad, tol, solver.get("method", "direct"), solver.get("compat_tol", 1e-6),
                   args.cache_dir or config.get("cache_dir"))


def build_mesh(mesh_cfg: dict, base: Path, level: int | None = None) -> SurfaceMesh:
    try:
        if "icosphere" in mesh_cfg:
            ico = mesh_cfg["icosphere"]
            return make_icosphere(ico.get("level", 2) if level is None else level, ico.get("radius", 1.0))
        if level is not None:
            raise CliError("usage_error", "level sweeps need an icosphere mesh", 1)
        if "box" in mesh_cfg:
            return make_box(mesh_cfg["box"].get("size", (2.0, 2.0, 2.0)), mesh_cfg["box"].get("center", (0.0, 0.0, 0.0)))
        path = Path(mesh_cfg["file"])
        return load_mesh(path if path.is_absolute() else base / path, mesh_cfg.get("format"))
    except (MeshError, OSError) as exc:
        raise CliError("mesh_error", str(exc), 1) from exc


def reference_for(data: dict):
    """Two-sided analytic solution behind a preset (``None`` for raw data)."""
    preset = data.get("preset")
    if preset == "shell":
        return oracle.transmission_reference(0, 0, 1.0, 1.0)
    if preset == "harmonic":
        n = data.get("n", 1)
        m = data.get("m", 0)
        if abs(m) > n:
            raise _schema_error("data: harmonic order |m| must not exceed n")
        return oracle.transmission_reference(n, m, data.get("a", 1.0), data.get("b", 1.0))
    if preset == "point_source":
        return oracle.PointSourceReference(tuple(data.get("x0_ext", (0, 0, 2))), tuple(data.get("x0_int", (0, 0, 0.3))))
    return None


def preset_traces(ref, mesh: SurfaceMesh) -> dict:
    """All four traces of a preset as densities on ``mesh``."""
    out = {"f_i": interpolate_p1(mesh, ref.f_i), "f_e": interpolate_p1(mesh, ref.f_e)}
    if isinstance(ref, oracle.TransmissionReference):
        out["g_i"] = project_to_p0(mesh, ref.g_i)
        out["g_e"] = project_to_p0(mesh, ref.g_e)
    else:
        out["g_i"], out["g_e"] = ref.normal_derivatives_p0(mesh)
    return out


def boundary_data(data: dict, mesh: SurfaceMesh, needed) -> dict:
    """Densities for the ``needed`` (name, space) components."""
    ref = reference_for(data)
    raw = {k: v for k, v in data.items() if k in ("f_i", "f_e", "g_i", "g_e")}
    if ref is not None and raw:
        raise _schema_error("data: give either a preset or explicit arrays, not both")
    if ref is not None:
        traces = preset_traces(ref, mesh)
        return {name: traces[name] for name, _ in needed}
    names = {name for name, _ in needed}
    if set(raw) != names:
        raise _schema_error(f"data: expected components {sorted(names)}, got {sorted(raw)}")
    out = {}
    for name, space in needed:
        d = density_from_json(raw[name])
        if d.space != space:
            raise _schema_error(f"data/{name}: expected a {space} density, got {d.space}")
        try:
            d.check(mesh)
        except ValueError as exc:
            raise _schema_error(f"data/{name}: {exc}") from exc
        out[name] = d
    return out


def _operators(ctx: Context, mesh: SurfaceMesh):
    try:
        return assemble(mesh, ctx.quad, cache_dir=ctx.cache_dir)
    except (ValueError, FloatingPointError) as exc:
        raise CliError("assembly_error", str(exc), 2) from exc


def _out_dir(args, config: dict, base: Path) -> Path:
    if args.output:
        return Path(args.output)
    if "output" in config:
        p = Path(config["output"])
        return p if p.is_absolute() else base / p
    return Path(".")


# ----------------------------------------------------------------------------
# VTK


def grid_points(grid: dict) -> np.ndarray:
    """Points of a structured grid, x fastest (VTK order)."""
    nx, ny, nz = grid["dims"]
    o = np.asarray(grid["origin"], dtype=float)
    s = np.asarray(grid["spacing"], dtype=float)
    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    idx = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)
    return o + idx * s


def sample_grid(solution, grid: dict, mask_tol: float = 1e-10, quad_order: int = 6):
    """Field values and side mask (0 masked, 1 interior, 2 exterior) on a grid."""
    mesh = solution.ops.mesh
    pts = grid_points(grid)
    values = np.zeros(len(pts))
    side = np.zeros(len(pts), dtype=int)
    ok = distance_to_surface(mesh, pts) > mask_tol * mesh.h
    idx = np.nonzero(ok)[0]
    try:
        samples = solution.evaluate(pts[idx], quad_order)
        vals = [s.value for s in samples]
        sides = [s.side for s in samples]
    except (OnSurfaceError, ValueError):
        vals, sides = [], []
        keep = []
        for i in idx:
            try:
                s = solution.evaluate(pts[i:i + 1], quad_order)[0]
            except (OnSurfaceError, ValueError):
                continue
            keep.append(i)
            vals.append(s.value)
            sides.append(s.side)
        idx = np.array(keep, dtype=int)
    values[idx] = vals
    side[idx] = [1 if s == "interior" else 2 for s in sides]
    return values, side


def export_vtk(values, side, grid: dict, path) -> None:
    """Legacy ASCII VTK structured-points file with scalars ``w`` and ``side``."""
    nx, ny, nz = grid["dims"]
    n = nx * ny * nz
    values = np.asarray(values, dtype=float)
    side = np.asarray(side, dtype=int)
    if values.shape != (n,) or side.shape != (n,):
        raise ValueError("field size does not match the grid")
    lines = [
        "# vtk DataFile Version 3.0",
        "dsbem field",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} {nz}",
        "ORIGIN " + " ".join(format(float(v), ".17g") for v in grid["origin"]),
        "SPACING " + " ".join(format(float(v), ".17g") for v in grid["spacing"]),
        f"POINT_DATA {n}",
        "SCALARS w double 1",
        "LOOKUP_TABLE default",
        *(format(float(v), ".17g") for v in values),
        "SCALARS side int 1",
        "LOOKUP_TABLE default",
        *(str(int(s)) for s in side),
    ]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise CliError("io_error", f"cannot write {path}: {exc}", 2) from exc


def read_vtk(path) -> dict:
    """Parse a file written by :func:`export_vtk`."""
    tokens = Path(path).read_text().split("\n")
    out: dict = {"fields": {}}
    i = 0
    while i < len(tokens):
        line = tokens[i].strip()
        head = line.split(" ")[0] if line else ""
        if head == "DIMENSIONS":
            out["dims"] = [int(v) for v in line.split()[1:]]
        elif head == "ORIGIN":
            out["origin"] = [float(v) for v in line.split()[1:]]
        elif head == "SPACING":
            out["spacing"] = [float(v) for v in line.split()[1:]]
        elif head == "POINT_DATA":
            out["n_points"] = int(line.split()[1])
        elif head == "SCALARS":
            name, dtype = line.split()[1:3]
            n = out["n_points"]
            vals = tokens[i + 2:i + 2 + n]
            out["fields"][name] = np.array(vals, dtype=float if dtype == "double" else int)
            i += 1 + n
        i += 1
    return out


# ----------------------------------------------------------------------------
# commands


def _probe_report(solution, probes, ref):
    if not probes:
        return []
    samples = solution.evaluate(np.asarray(probes, dtype=float))
    out = []
    for s in samples:
        item = {"point": list(s.point), "side": s.side, "value": s.value}
        if ref is not None:
            item["reference"] = float(ref.field(np.array([s.point]), s.side == "interior")[0])
        out.append(item)
    return out


def _solution_json(sol) -> dict:
    return {
        "kind": sol.kind,
        "sigma": sol.sigma.to_json(),
        "q": sol.q.to_json(),
        "gauge_constant": sol.gauge_constant,
    }


def _traces_json(sol) -> dict:
    t = sol.traces
    return {
        "dirichlet": sol.dirichlet.to_json(),
        "neumann": sol.neumann.to_json(),
        "weak": {"f_i": {"p0_tested": t.f_i}, "f_e": {"p0_tested": t.f_e},
                 "g_i": {"p1_tested": t.g_i}, "g_e": {"p1_tested": t.g_e}},
    }


def _run_solver(fn):
    try:
        return fn()
    except IncompatibleDataError as exc:
        raise CliError(exc.code, str(exc), 2) from exc
    except SolverError as exc:
        raise CliError("solver_error", str(exc), 2) from exc
    except OnSurfaceError as exc:
        raise CliError("evaluation_error", str(exc), 2) from exc


def cmd_solve(args) -> int:
    config = load_config(args.config)
    base = Path(args.config).resolve().parent
    ctx = _context(args, config, base)
    kind = config.get("problem")
    if kind is None:
        raise _schema_error("problem kind missing")
    mesh = build_mesh(config["mesh"], base)
    data = boundary_data(config.get("data", {}), mesh, KIND_DATA[kind])
    ops = _operators(ctx, mesh)
    first, second = (data[name] for name, _ in KIND_DATA[kind])
    kwargs = {"tol": ctx.tol, "method": ctx.method}
    if kind in ("neumann", "mixed_int_n_ext_d"):
        kwargs["compat_tol"] = ctx.compat_tol
    sol = _run_solver(lambda: solve(ops, kind, first, second, **kwargs))
    ref = reference_for(config.get("data", {}))
    out = _out_dir(args, config, base)
    report = {
        "version": __version__,
        "mesh": mesh_stats(mesh).as_dict(),
        "quadrature": ctx.quad.as_dict(),
        "solution": sol.summary(),
        "probes": _run_solver(lambda: _probe_report(sol, config.get("probes"), ref)),
    }
    write_json(out / "solution.json", _solution_json(sol))
    write_json(out / "traces.json", _traces_json(sol))
    write_json(out / "report.json", report)
    if "grid" in config:
        values, side = _run_solver(lambda: sample_grid(sol, config["grid"]))
        export_vtk(values, side, config["grid"], out / "field.vtk")
    print(dumps({"status": "ok", "kind": kind, "output": str(out), "residuals": sol.residuals}))
    return 0


def _cmd_map(args, direction: str) -> int:
    config = load_config(args.config)
    base = Path(args.config).resolve().parent
    ctx = _context(args, config, base)
    mesh = build_mesh(config["mesh"], base)
    kind = "dirichlet" if direction == "DtN" else "neumann"
    if config.get("problem", kind) != kind:
        raise _schema_error(f"{direction} needs {kind} data, config declares {config['problem']}")
    data = boundary_data(config.get("data", {}), mesh, KIND_DATA[kind])
    ops = _operators(ctx, mesh)
    a, b = (data[name] for name, _ in KIND_DATA[kind])
    if direction == "DtN":
        sol = _run_solver(lambda: dtn_solution(ops, (a, b), tol=ctx.tol, method=ctx.method))
        result = sol.neumann
    else:
        sol = _run_solver(lambda: ntd_solution(ops, (a, b), tol=ctx.tol, method=ctx.method, compat_tol=ctx.compat_tol))
        result = sol.dirichlet
    out = _out_dir(args, config, base)
    write_json(out / f"{direction.lower()}.json", {
        "direction": direction,
        "input": {"kind": kind, "interior": a.to_json(), "exterior": b.to_json()},
        "output": result.to_json(),
        "gauge_constant": sol.gauge_constant,
        "solution": sol.summary(),
    })
    print(dumps({"status": "ok", "direction": direction, "output": str(out)}))
    return 0


def cmd_dtn(args) -> int:
    return _cmd_map(args, "DtN")


def cmd_ntd(args) -> int:
    return _cmd_map(args, "NtD")


def default_probes(r_in: float = 0.5, r_out: float = 1.6) -> np.ndarray:
    dirs = np.vstack([np.eye(3), -np.eye(3), np.array(np.meshgrid([-1, 1], [-1, 1], [-1, 1])).reshape(3, -1).T / np.sqrt(3)])
    return np.vstack([r_in * dirs, r_out * dirs])


def convergence_rows(ctx: Context, kind: str, levels, probes=None) -> list[dict]:
    """Errors of the Galerkin solution against the preset's analytic solution.

    ``err_sigma`` and ``err_q`` are relative L2 errors of the densities against
    the jumps of the reference traces (absolute RMS when the reference jump
    vanishes); ``q`` is compared up to a constant when the problem leaves it
    undetermined.  ``err_field`` is the relative l2 error over the probes,
    with the interior values aligned by their mean offset in that case.
    """
    ref = reference_for(ctx.config.get("data", {}))
    if ref is None:
        raise _schema_error("convergence needs a data preset")
    probes = default_probes() if probes is None else np.asarray(probes, dtype=float)
    rows = []
    for level in levels:
        mesh = build_mesh(ctx.config["mesh"], ctx.base, level)
        data = preset_traces(ref, mesh)
        ops = _operators(ctx, mesh)
        first, second = (data[name] for name, _ in KIND_DATA[kind])
        kwargs = {"tol": ctx.tol, "method": ctx.method}
        if kind in ("neumann", "mixed_int_n_ext_d"):
            kwargs["compat_tol"] = ctx.compat_tol
        sol = _run_solver(lambda: solve(ops, kind, first, second, **kwargs))
        M = ops.masses
        floating = kind in ("neumann", "mixed_int_n_ext_d")

        s_ref = data["g_i"].coefficients - data["g_e"].coefficients
        ds = sol.sigma.coefficients - s_ref
        q_ref = data["f_i"].coefficients - data["f_e"].coefficients
        dq = sol.q_full.coefficients - q_ref
        if floating:
            w = M.M11.sum(axis=0).A1
            dq = dq - (dq @ w) / w.sum()

        def rel(d, r, tested):
            nr = weak_norm(M, (M.M00 if tested == "p0" else M.M11) @ r, tested)
            nd = weak_norm(M, (M.M00 if tested == "p0" else M.M11) @ d, tested)
            return nd / nr if nr > 1e-12 else nd / np.sqrt(mesh.total_area)

        inside = classify_side(mesh, probes)
        vals = np.array([s.value for s in _run_solver(lambda: sol.evaluate(probes))])
        exact = ref.field(probes, inside)
        if floating and inside.any():
            vals[inside] += np.mean(exact[inside] - vals[inside])
        rows.append({
            "level": level,
            "h": mesh.h,
            "dof": mesh.n_triangles + mesh.n_vertices,
            "err_sigma": rel(ds, s_ref, "p0"),
            "err_q": rel(dq, q_ref, "p1"),
            "err_field": float(np.linalg.norm(vals - exact) / np.linalg.norm(exact)),
        })
    for prev, row in zip([None] + rows[:-1], rows):
        row["observed_order"] = None if prev is None else float(np.log2(prev["err_field"] / row["err_field"]))
    return rows


CSV_COLUMNS = ("level", "h", "dof", "err_sigma", "err_q", "err_field", "observed_order")


def write_convergence_csv(rows, path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in rows:
                writer.writerow([
                    r["level"], format(r["h"], ".17g"), r["dof"],
                    *(format(r[k], ".17g") for k in ("err_sigma", "err_q", "err_field")),
                    "" if r["observed_order"] is None else format(r["observed_order"], ".17g"),
                ])
    except OSError as exc:
        raise CliError("io_error", f"cannot write {path}: {exc}", 2) from exc


def cmd_convergence(args) -> int:
    config = load_config(args.config)
    base = Path(args.config).resolve().parent
    ctx = _context(args, config, base)
    kind = config.get("problem")
    if kind is None:
        raise _schema_error("problem kind missing")
    if "icosphere" not in config["mesh"]:
        raise CliError("usage_error", "convergence studies need an icosphere mesh", 1)
    if args.levels:
        lo, hi = args.levels
        levels = list(range(lo, hi + 1))
    else:
        levels = config.get("levels", [1, 2, 3])
    if not levels or min(levels) < 0 or max(levels) > 7:
        raise CliError("usage_error", "levels must lie in 0..7", 1)
    rows = convergence_rows(ctx, kind, levels, config.get("probes"))
    path = Path(args.csv) if args.csv else _out_dir(args, config, base) / "convergence.csv"
    write_convergence_csv(rows, path)
    print(dumps({"status": "ok", "csv": str(path), "rows": len(rows)}))
    return 0


def cmd_mesh_info(args) -> int:
    if args.icosphere is not None:
        mesh = build_mesh({"icosphere": {"level": args.icosphere}}, Path("."))
        report = validate(mesh)
    else:
        if args.source is None:
            raise CliError("usage_error", "give a mesh file, a config file or --icosphere", 1)
        src = Path(args.source)
        if src.suffix == ".json":
            config = load_config(args.source)
            mesh = build_mesh(config["mesh"], src.resolve().parent)
            report = validate(mesh)
        else:
            try:
                mesh = load_mesh(src, check=False)
            except (MeshError, OSError) as exc:
                raise CliError("mesh_error", str(exc), 1) from exc
            report = validate(mesh)
    info = {"valid": report.ok, "violations": [{"code": v.code, "message": v.message, "count": v.count}
                                                for v in report.violations]}
    if report.ok:
        info["stats"] = mesh_stats(mesh).as_dict()
    print(dumps(info))
    return 0 if report.ok else 2


# ----------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage_error", message, 1)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="assembly threads")
    common.add_argument("--quad-order", type=int, default=None,
                        help="regular-pair rule degree K (near pairs K+4, touching pairs K+2 points per axis)")
    common.add_argument("--tol", type=float, default=None, help="solver tolerance")
    common.add_argument("--cache-dir", default=None, help="directory for cached operator matrices")
    common.add_argument("-o", "--output", default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="dsbem", description="Double-sided Laplace boundary element solver")
    p.add_argument("--version", action="version", version=f"dsbem {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn, help_ in (
        ("solve", cmd_solve, "solve a double-sided problem"),
        ("dtn", cmd_dtn, "apply the Dirichlet-to-Neumann map"),
        ("ntd", cmd_ntd, "apply the Neumann-to-Dirichlet map"),
    ):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("config")
        sp.set_defaults(func=fn)
    sp = sub.add_parser("convergence", parents=[common], help="convergence study over icosphere levels")
    sp.add_argument("config")
    sp.add_argument("--levels", nargs=2, type=int, metavar=("FIRST", "LAST"))
    sp.add_argument("--csv", default=None, help="CSV path (default OUTPUT/convergence.csv)")
    sp.set_defaults(func=cmd_convergence)
    sp = sub.add_parser("mesh-info", parents=[common], help="mesh statistics and validation")
    sp.add_argument("source", nargs="?", help="OFF/OBJ mesh or JSON config")
    sp.add_argument("--icosphere", type=int, default=None, metavar="LEVEL")
    sp.set_defaults(func=cmd_mesh_info)
    return p


def _set_threads(n):
    if n is None:
        return
    import numba

    if not 1 <= n <= numba.config.NUMBA_NUM_THREADS:
        raise CliError("usage_error", f"--threads must be in 1..{numba.config.NUMBA_NUM_THREADS}", 1)
    numba.set_num_threads(n)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        _set_threads(args.threads)
        return args.func(args)
    except CliError as exc:
        print(dumps({"error": {"code": exc.code, "message": str(exc)}}), file=sys.stderr)
        return exc.exit_code
    except MeshError as exc:
        print(dumps({"error": {"code": "mesh_error", "message": str(exc)}}), file=sys.stderr)
        return 1
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(dumps({"error": {"code": "numerical_error", "message": str(exc)}}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
