"""Command-line experiment driver.

Every subcommand reads a TOML config, validates it against a JSON schema,
writes deterministic JSON/CSV artifacts stamped with the config hash and
exits with a code that encodes the outcome:

    0  all declared thresholds pass
    1  a threshold fails
    2  normalization bracket not found
    3  config schema violation or unreadable config
    4  inadmissible generator or out-of-domain input
    5  other numerical failure (truncation, stiffness, scheme, degenerate fit)
    6  output could not be written
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import evolution, family, io, normalization, transport
from .errors import BracketError, DomainError, GeneratorError, InputError, PhiExpError
from .phi_core import from_config

log = logging.getLogger("phiexp")

EXIT_OK, EXIT_FAIL, EXIT_BRACKET, EXIT_CONFIG, EXIT_DOMAIN, EXIT_NUMERIC, EXIT_IO = range(7)

COMMANDS = ("normalize", "density", "moments", "coincidence", "w2", "geodesic", "evolve", "stability")

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}
_COV = {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, _MAT]}
_POS = {"type": "number", "exclusiveMinimum": 0}
_TIMES = {"type": "array", "items": {"type": "number", "minimum": 0}}


def _section(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


_FLOW = {
    "cov": _COV,
    "geometry": {"enum": ["radial", "cartesian"]},
    "cells": {"type": "integer", "minimum": 8},
    "radii": _POS,
    "t_end": _POS,
    "output_times": _TIMES,
    "cfl": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "drift": {"type": "boolean"},
    "mass_tol": _POS,
    "residual_threshold": _POS,
    "departure_threshold": _POS,
    "write_snapshots": {"type": "boolean"},
}

SCHEMA = {
    "type": "object",
    "required": ["generator", "dim"],
    "additionalProperties": False,
    "properties": {
        "dim": {"type": "integer", "minimum": 2, "maximum": 64},
        "seed": {"type": "integer"},
        "family": {"enum": ["N", "G"]},
        "generator": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["power", "perturbed_power", "table"]},
                "q": _POS,
                "eps": _NUM,
                "table_path": {"type": "string"},
                "scale": _POS,
            },
            "allOf": [
                {"if": {"properties": {"kind": {"const": "power"}}}, "then": {"required": ["q"]}},
                {"if": {"properties": {"kind": {"const": "perturbed_power"}}}, "then": {"required": ["q", "eps"]}},
                {"if": {"properties": {"kind": {"const": "table"}}}, "then": {"required": ["table_path"]}},
            ],
        },
        "normalize": _section({"V": _COV}),
        "density": _section(
            {"mean": _VEC, "cov": _COV, "points": _MAT, "n": {"type": "integer", "minimum": 2}, "radii": _POS}
        ),
        "moments": _section({"mean": _VEC, "cov": _COV, "tol": _POS}),
        "coincidence": _section(
            {
                "a": {"type": "array", "items": _POS, "minItems": 1},
                "threshold": _POS,
                "gap_threshold": _POS,
                "n_grid": {"type": "integer", "minimum": 3},
                "r_max": _POS,
                "psi": {"type": "object"},
            }
        ),
        "w2": _section({"v": _VEC, "V": _COV, "u": _VEC, "U": _COV}),
        "geodesic": _section(
            {"v": _VEC, "V": _COV, "u": _VEC, "U": _COV, "t": {"oneOf": [_NUM, _VEC]}, "extrapolate": {"type": "boolean"}}
        ),
        "evolve": _section(_FLOW),
        "stability": _section(_FLOW),
    },
}

SCHEMA["properties"]["coincidence"]["properties"]["psi"] = SCHEMA["properties"]["generator"]

DEFAULTS = {
    "family": "N",
    "normalize": {},
    "density": {"n": 101, "radii": 4.0},
    "moments": {"tol": 1e-6},
    "coincidence": {"a": [0.5, 2.0, 4.0], "threshold": 1e-6, "gap_threshold": 1e-4, "n_grid": 4001, "r_max": 8.0},
    "w2": {},
    "geodesic": {"t": [0.5], "extrapolate": False},
    "evolve": {
        "cov": 4.0,
        "geometry": "radial",
        "cells": 512,
        "radii": 8.0,
        "t_end": 2.0,
        "output_times": [0.5, 1.0, 2.0],
        "cfl": 0.4,
        "drift": True,
        "mass_tol": 1e-8,
        "write_snapshots": True,
    },
}
DEFAULTS["stability"] = {**DEFAULTS["evolve"], "residual_threshold": 5e-3, "departure_threshold": 1e-3}


class ConfigError(PhiExpError):
    pass


# --------------------------------------------------------------------------
# config handling


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config schema violation at {where}: {exc.message}") from exc


def resolve_config(raw: dict, command: str, args) -> dict:
    """Defaults merged with the file and the command-line overrides."""
    cfg = copy.deepcopy(raw)
    cfg.setdefault("family", DEFAULTS["family"])
    if getattr(args, "family", None):
        cfg["family"] = args.family
    section = {**DEFAULTS.get(command, {}), **cfg.get(command, {})}
    res = getattr(args, "resolution", None)
    if res is not None:
        key = {"density": "n", "coincidence": "n_grid", "evolve": "cells", "stability": "cells"}.get(command)
        if key is None:
            raise ConfigError(f"--resolution has no meaning for {command}")
        section[key] = int(res)
    cfg[command] = section
    validate_config(cfg)
    cfg["command"] = command
    cfg["expect_gap"] = bool(getattr(args, "expect_gap", False))
    return cfg


def _matrix(value, d, name):
    if isinstance(value, (int, float)):
        return float(value) * np.eye(d)
    M = np.array(value, dtype=float)
    if M.shape != (d, d):
        raise InputError(f"{name} must be {d}x{d}, got shape {M.shape}")
    return M


def _vector(value, d, name):
    v = np.zeros(d) if value is None else np.array(value, dtype=float)
    if v.shape != (d,):
        raise InputError(f"{name} must have {d} entries")
    return v


# --------------------------------------------------------------------------
# commands; each returns (exit code, {filename: payload})


def cmd_normalize(cfg, phi, base):
    d = cfg["dim"]
    V = _matrix(cfg["normalize"].get("V", 1.0), d, "V")
    consts = normalization.solve_constants(phi, d, V, family=cfg["family"])
    payload = {
        "generator": phi.label,
        "lambda": consts.lam,
        "c": consts.c,
        "dim": d,
        "det_V": consts.det_V,
        "family": consts.family,
        "residuals": {"relative_equation_residual": consts.residual},
        "bracket_info": {"bracket": list(consts.bracket), "multiple_crossings": consts.multiple_crossings},
    }
    return EXIT_OK, {"normalize.json": payload}


def cmd_density(cfg, phi, base):
    d = cfg["dim"]
    sec = cfg["density"]
    mean = _vector(sec.get("mean"), d, "mean")
    cov = _matrix(sec.get("cov", 1.0), d, "cov")
    point = family.make_point(phi, mean, cov, cfg["family"])
    files = {}
    if "points" in sec:
        pts = np.array(sec["points"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != d:
            raise InputError(f"points must be rows of {d} coordinates")
        vals = np.atleast_1d(point(pts))
        files["density.csv"] = ("points", [f"x{i + 1}" for i in range(d)] + ["rho"], np.column_stack([pts, vals]))
    elif d == 2:
        n = sec["n"]
        sd = np.sqrt(np.diag(cov))
        xs = np.linspace(mean[0] - sec["radii"] * sd[0], mean[0] + sec["radii"] * sd[0], n)
        ys = np.linspace(mean[1] - sec["radii"] * sd[1], mean[1] + sec["radii"] * sd[1], n)
        P = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
        files["density.csv"] = ("points", ["x1", "x2", "rho"], np.column_stack([P, point(P)]))
    else:
        # radial profile along the first principal axis in Mahalanobis radius
        m = np.linspace(0.0, sec["radii"], sec["n"])
        files["density.csv"] = ("points", ["r", "rho"], np.column_stack([m, point.profile(m * m)]))
    files["density.json"] = {
        "generator": phi.label,
        "family": cfg["family"],
        "dim": d,
        "v": mean,
        "V": cov,
        "radial_coordinate": "mahalanobis" if ("points" not in sec and d != 2) else None,
        "lambda": point.constants.lam,
        "c": point.constants.c,
        "peak": point.peak,
        "support_radius": point.support_radius,
        "csv": "density.csv",
    }
    return EXIT_OK, files


def cmd_moments(cfg, phi, base):
    d = cfg["dim"]
    sec = cfg["moments"]
    mean = _vector(sec.get("mean"), d, "mean")
    cov = _matrix(sec.get("cov", 1.0), d, "cov")
    point = family.make_point(phi, mean, cov, cfg["family"])
    rep = family.verify_moments(point, sec["tol"])
    ok = rep.ok(sec["tol"])
    payload = {
        "generator": phi.label,
        "family": cfg["family"],
        "mass": rep.mass,
        "mean": rep.mean,
        "cov": rep.cov,
        "deviations": {"mass": rep.mass_dev, "mean": rep.mean_dev, "cov": rep.cov_dev},
        "truncation_radius": rep.radius,
        "tail_estimate": rep.tail_estimate,
        "tol": sec["tol"],
        "pass": ok,
    }
    return (EXIT_OK if ok else EXIT_FAIL), {"moments.json": payload}


def cmd_coincidence(cfg, phi, base):
    d = cfg["dim"]
    sec = cfg["coincidence"]
    psi = from_config(sec["psi"], base) if "psi" in sec else phi
    gaps = [family.coincidence_gap(phi, psi, d, a, n_grid=sec["n_grid"], r_max=sec["r_max"]) for a in sec["a"]]
    max_gap = max(gaps)
    if cfg["expect_gap"]:
        ok = max_gap > sec["gap_threshold"]
        mode, thr = "expect-gap", sec["gap_threshold"]
    else:
        ok = max_gap < sec["threshold"]
        mode, thr = "expect-coincidence", sec["threshold"]
    payload = {
        "phi": phi.label,
        "psi": psi.label,
        "a": sec["a"],
        "gaps": gaps,
        "max_gap": max_gap,
        "mode": mode,
        "threshold": thr,
        "pass": ok,
    }
    return (EXIT_OK if ok else EXIT_FAIL), {"coincidence.json": payload}


def _pair(cfg, sec):
    d = cfg["dim"]
    p = transport.GaussianParams(_vector(sec.get("v"), d, "v"), _matrix(sec.get("V", 1.0), d, "V"))
    q = transport.GaussianParams(_vector(sec.get("u"), d, "u"), _matrix(sec.get("U", 1.0), d, "U"))
    return p, q


def cmd_w2(cfg, phi, base):
    p, q = _pair(cfg, cfg["w2"])
    tmap = transport.optimal_matrix(p.cov, q.cov, p.mean, q.mean)
    payload = {"v": p.mean, "V": p.cov, "u": q.mean, "U": q.cov, "W2": transport.w2_distance(p, q), "W": tmap.W}
    return EXIT_OK, {"w2.json": payload}


def cmd_geodesic(cfg, phi, base):
    sec = cfg["geodesic"]
    p, q = _pair(cfg, sec)
    ts = sec["t"] if isinstance(sec["t"], list) else [sec["t"]]
    W = transport.optimal_matrix(p.cov, q.cov).W
    total = transport.w2_distance(p, q)
    records = []
    for t in ts:
        pt = transport.geodesic_point(p, q, float(t), extrapolate=sec["extrapolate"])
        records.append(
            {
                "v": p.mean,
                "V": p.cov,
                "u": q.mean,
                "U": q.cov,
                "t": float(t),
                "W2": transport.w2_distance(p, pt),
                "w_t": pt.mean,
                "W_t": pt.cov,
            }
        )
    payload = {"W": W, "W2_endpoints": total, "records": records}
    return EXIT_OK, {"geodesic.json": payload}


def _run_flow(cfg, phi, sec):
    d = cfg["dim"]
    cov = _matrix(sec["cov"], d, "cov")
    init = evolution.initial_density(phi, d, cov, sec["cells"], geometry=sec["geometry"], radii=sec["radii"])
    times = sorted(set(float(t) for t in sec["output_times"] if t <= sec["t_end"]) | {float(sec["t_end"])})
    fc = evolution.FlowConfig(phi, d, sec["t_end"], times, cfl=sec["cfl"], drift=sec["drift"])
    traj = evolution.pde_evolve(init, fc)
    stab = evolution.stability_diagnostic(traj, phi, cfg["family"])
    ode = None
    if sec["drift"]:
        ode = evolution.moment_ode_evolve(phi, d, cov, sec["t_end"], traj.times)
    return traj, stab, ode, fc


def _flow_outputs(cfg, phi, sec, traj, stab, ode, fc, digest):
    files = {}
    snaps = []
    for k, (t, grid) in enumerate(zip(traj.times, traj.grids)):
        name = f"trajectory/rho_{k:04d}.csv"
        if sec["write_snapshots"]:
            files[name] = ("grid", grid)
        snaps.append({"t": t, "file": name if sec["write_snapshots"] else None})
    covs = evolution.trajectory_moments(traj)
    manifest = {
        "generator": phi.label,
        "family": cfg["family"],
        "potential_coefficient": fc.potential_coefficient if fc.drift else 0.0,
        "backend": traj.backend,
        "steps": traj.steps,
        "step_halvings": traj.halvings,
        "domain_expansions": traj.expansions,
        "snapshots": snaps,
        "mass_series": traj.masses,
        "mass_drift": traj.mass_drift(),
        "moment_series": [{"t": t, "cov": c} for t, c in zip(traj.times, covs)],
        "residual_series": [
            {"t": p.t, "l1_residual": p.l1_residual, "fitted_cov": p.fitted_cov, "note": p.note} for p in stab
        ],
    }
    if ode is not None:
        manifest["ode_series"] = [{"t": t, "cov": V} for t, V in zip(ode.times, ode.covariances)]
        manifest["ode_rel_dev"] = float(
            max(np.max(np.abs(c - V)) / np.max(np.abs(V)) for c, V in zip(covs, ode.covariances))
        )
    return files, manifest


def cmd_evolve(cfg, phi, base, digest):
    sec = cfg["evolve"]
    traj, stab, ode, fc = _run_flow(cfg, phi, sec)
    files, manifest = _flow_outputs(cfg, phi, sec, traj, stab, ode, fc, digest)
    ok = manifest["mass_drift"] < sec["mass_tol"]
    manifest["checks"] = {"mass_drift_below_tol": ok}
    files["manifest.json"] = manifest
    return (EXIT_OK if ok else EXIT_FAIL), files


def cmd_stability(cfg, phi, base, digest):
    sec = cfg["stability"]
    traj, stab, ode, fc = _run_flow(cfg, phi, sec)
    files, manifest = _flow_outputs(cfg, phi, sec, traj, stab, ode, fc, digest)
    res = [p.l1_residual for p in stab if p.l1_residual is not None]
    max_res = max(res) if res else math.nan
    mass_ok = manifest["mass_drift"] < sec["mass_tol"]
    if cfg["expect_gap"]:
        ok = mass_ok and res != [] and max_res > sec["departure_threshold"]
        mode, thr = "expect-departure", sec["departure_threshold"]
    else:
        ok = mass_ok and res != [] and len(res) == len(stab) and max_res < sec["residual_threshold"]
        mode, thr = "expect-stable", sec["residual_threshold"]
    manifest["checks"] = {"mode": mode, "threshold": thr, "max_residual": max_res, "mass_ok": mass_ok, "pass": ok}
    files["manifest.json"] = manifest
    return (EXIT_OK if ok else EXIT_FAIL), files


HANDLERS = {
    "normalize": cmd_normalize,
    "density": cmd_density,
    "moments": cmd_moments,
    "coincidence": cmd_coincidence,
    "w2": cmd_w2,
    "geodesic": cmd_geodesic,
    "evolve": cmd_evolve,
    "stability": cmd_stability,
}


# --------------------------------------------------------------------------


def _write(out: Path, files: dict, cfg: dict, digest: str):
    for name, content in sorted(files.items()):
        path = out / name
        if isinstance(content, dict):
            io.write_json(path, content, cfg)
        elif content[0] == "grid":
            io.write_density_csv(path, content[1], digest)
        else:
            _, columns, data = content
            io.write_points_csv(path, columns, data, digest)


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the config-error code (2 is reserved for bracket failures)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, help="TOML experiment config")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--resolution", type=int, help="grid resolution override")
    common.add_argument("--expect-gap", action="store_true", help="pass when the dichotomy gap is present")
    common.add_argument("--family", choices=["N", "G"], help="family tag override")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = _Parser(prog="phiexp", description="phi-exponential family experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    return parser


def run(args) -> int:
    try:
        raw = load_config(args.config)
        cfg = resolve_config(raw, args.command, args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    digest = io.config_hash(cfg)
    base = Path(args.config).resolve().parent
    try:
        phi = from_config(cfg["generator"], base)
        handler = HANDLERS[args.command]
        if args.command in ("evolve", "stability"):
            code, files = handler(cfg, phi, base, digest)
        else:
            code, files = handler(cfg, phi, base)
    except BracketError as exc:
        log.error("bracket error: %s", exc)
        return EXIT_BRACKET
    except (GeneratorError, DomainError, InputError) as exc:
        log.error("rejected: %s", exc)
        return EXIT_DOMAIN
    except FileNotFoundError as exc:
        log.error("rejected: %s", exc)
        return EXIT_DOMAIN
    except (PhiExpError, np.linalg.LinAlgError) as exc:
        # numeric failures and anything else the library could not classify
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    try:
        _write(Path(args.out), files, cfg, digest)
    except OSError as exc:
        log.error("cannot write outputs: %s", exc)
        return EXIT_IO
    if code != EXIT_OK:
        log.warning("%s: threshold check failed", args.command)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
