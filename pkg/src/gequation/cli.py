"""Batch front-end: one subcommand per experiment, TOML configs, manifests and tables.

Every run writes ``manifest.json`` (full parameter set and version),
``result.json`` (summary plus runtime) and CSV tables into ``--out``.
Exit codes: 0 success, 2 non-convergence (partial results written),
1 usage, configuration or budget errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .errors import GEquationError, NonConvergenceError, ResourceError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SUBCOMMANDS = ("hbar", "sweep", "exact-shear", "strain-shear", "game", "reach", "orbit", "bifurcate", "rate",
               "kpp", "compare-curvature")
DEFAULT_BUDGET = 2e11  # cell-steps


class UsageError(Exception):
    """Bad flags, malformed config or an exceeded budget; exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"usage error: {message}")


# ---------------------------------------------------------------- value parsing

def _floats(s) -> list[float]:
    if isinstance(s, (int, float)):
        return [float(s)]
    if isinstance(s, (list, tuple)):
        return [float(x) for x in s]
    try:
        return [float(x) for x in str(s).replace(";", ",").split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"malformed number list '{s}'") from exc


def _vec(s) -> np.ndarray:
    return np.array(_floats(s))


def _range_or_list(s) -> list[float]:
    """``a:b:step`` (inclusive) or a comma list."""
    if isinstance(s, str) and s.count(":") == 2:
        a, b, h = (float(x) for x in s.split(":"))
        if h <= 0:
            raise UsageError("range step must be positive")
        return [float(x) for x in np.round(np.arange(a, b + 0.5 * h, h), 12)]
    return _floats(s)


# ---------------------------------------------------------------- subcommand table

# name -> {param: (default, type, help)}
_PARAMS: dict[str, dict[str, tuple]] = {
    "hbar": {
        "flow": ("cellular", str, "flow id, e.g. cellular, abc:1,1,1, shear2d:sin"),
        "A": (1.0, float, "flow intensity"),
        "p": ("1,0", str, "direction vector"),
        "d": (0.0, float, "Markstein number"),
        "variant": (None, str, "inviscid|viscous|curvature|strain|quadratic (default: inviscid if d=0 else viscous)"),
        "method": ("large_time", str, "large_time|discounted|control"),
        "n": (128, int, "cells per axis"),
        "T": (20.0, float, "horizon for large-time runs"),
        "cfl": (0.5, float, "CFL number"),
        "integrator": ("euler", str, "euler|tvd_rk2"),
        "order": (1, int, "spatial order (1 or 5)"),
        "lambdas": ("0.2,0.1,0.05,0.025", str, "discount schedule"),
    },
    "sweep": {
        "flow": ("cellular", str, "flow id"),
        "A_list": ("1,2,4,8", str, "intensities (comma list or a:b:step)"),
        "p": ("1,0", str, "direction vector"),
        "d": (0.0, float, "Markstein number"),
        "variant": (None, str, "equation variant"),
        "method": ("large_time", str, "large_time|discounted|control"),
        "n": (128, int, "cells per axis"),
        "T": (20.0, float, "horizon"),
        "cfl": (0.5, float, "CFL number"),
    },
    "exact-shear": {
        "profile": ("sin", str, "named profile or CSV samples"),
        "amplitude": (1.0, float, "profile multiplier"),
        "p": ("0,1", str, "direction (a, b)"),
    },
    "strain-shear": {
        "profile": ("sin", str, "named profile or CSV samples"),
        "amplitude": (1.0, float, "profile multiplier"),
        "p_prime": (2.0, float, "mean slope p'"),
        "d": ("0.1", str, "Markstein numbers (comma list)"),
    },
    "game": {
        "flow": ("zero", str, "flow id"),
        "A": (1.0, float, "flow intensity"),
        "tau": (0.1, float, "move scale"),
        "d": (0.05, float, "Markstein number"),
        "t": (0.5, float, "horizon (moves = round(t / tau^2))"),
        "n": (64, int, "cells per axis"),
        "p": (None, str, "slope of the planar payoff part (default 0)"),
        "payoff": ("circle", str, "planar | circle[:cx,cy,r]"),
        "angles": (32, int, "angle count"),
        "radii": ("0,0.5,1", str, "control magnitudes"),
        "x0": (None, str, "start point for a trajectory"),
        "policy": ("null", str, "null | radial_out[:c] | toward:x,y"),
        "samples": (4096, int, "sampled adversaries beyond exhaustive enumeration"),
    },
    "reach": {
        "flow": ("zero", str, "flow id"),
        "A": (1.0, float, "flow intensity"),
        "source": ("3.14159265358979,3.14159265358979", str, "target center"),
        "r0": (0.2, float, "target radius"),
        "n": (128, int, "cells per axis"),
        "t_max": (None, float, "time cap"),
    },
    "orbit": {
        "flow": ("abc:1,1,1", str, "3D flow id"),
        "shift": ("x", str, "x|y|z or a lattice vector"),
        "A_max": (10.0, float, "largest intensity in the bound table"),
        "tol": (1e-8, float, "residual tolerance"),
    },
    "bifurcate": {
        "profile": ("cosavg", str, "two-variable profile"),
        "p": ("0,0,1", str, "direction with p_3 = 1"),
        "d": (0.2, float, "Markstein number"),
        "A_grid": ("0:16:0.25", str, "intensity grid"),
        "n": (64, int, "cells per axis"),
        "T": (20.0, float, "horizon"),
    },
    "rate": {
        "flow": ("shear2d:sin", str, "shear flow id"),
        "A": (1.0, float, "flow intensity"),
        "p": ("0,1", str, "direction"),
        "eps": ("0.125,0.0625,0.03125,0.015625", str, "microscopic scales"),
        "t": (1.0, float, "comparison time"),
        "cells": (64, int, "cells per microscopic period"),
    },
    "kpp": {
        "flow": ("zero", str, "flow id"),
        "A": (1.0, float, "flow intensity"),
        "p": ("1,0", str, "direction"),
        "d": (1.0, float, "diffusivity"),
        "f0prime": (1.0, float, "reaction slope at zero"),
        "n": (32, int, "cells per axis"),
    },
    "compare-curvature": {
        "p": ("1,0", str, "direction"),
        "d": (0.1, float, "Markstein number"),
        "A_list": ("2,4,8", str, "intensities"),
        "n": (64, int, "cells per axis"),
        "T": (20.0, float, "horizon"),
    },
}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-") if len(name) > 1 else "--" + name


def build_parser() -> _Parser:
    parser = _Parser(prog="gequation", description="Effective burning velocities of G-equations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name, params in _PARAMS.items():
        sp = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        sp.add_argument("--out", help="output directory (default: out/<subcommand>)")
        sp.add_argument("--config", help="TOML file; flags override its keys")
        sp.add_argument("--budget", type=float, help=f"cell-step budget (default {DEFAULT_BUDGET:g})")
        sp.add_argument("--seed", type=int, help="seed for sampled adversaries (default 0)")
        sp.add_argument("--gnuplot", action="store_true", help="write .gp stubs next to tables")
        for key, (default, typ, text) in params.items():
            sp.add_argument(_flag(key), dest=key, type=typ, help=f"{text} (default: {default})")
    return parser


def resolve_params(subcommand: str, flags: dict, config: dict | None = None) -> dict:
    """Defaults, then config keys, then explicit flags."""
    params = {k: v[0] for k, v in _PARAMS[subcommand].items()}
    params.update({"budget": DEFAULT_BUDGET, "seed": 0, "gnuplot": False})
    for key, val in (config or {}).items():
        k = key.replace("-", "_")
        if k not in params:
            raise UsageError(f"config error: unknown key '{key}' for {subcommand}")
        params[k] = val
    params.update({k: v for k, v in flags.items() if k not in ("out", "config", "subcommand")})
    for k, (default, typ, _) in _PARAMS[subcommand].items():
        if params[k] is not None and typ in (int, float) and not isinstance(params[k], (int, float)):
            try:
                params[k] = typ(params[k])
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config error: '{k}' must be {typ.__name__}") from exc
    return params


def _load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config error: file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config error: malformed TOML in {path}: {exc}") from exc


# ---------------------------------------------------------------- outputs

class Outputs:
    """Collects tables under ``out`` with deterministic formatting."""

    def __init__(self, out: Path, gnuplot: bool):
        self.out = out
        self.gnuplot = gnuplot
        out.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, rows: Sequence[dict], plot: tuple[str, str] | None = None) -> None:
        if not rows:
            return
        cols = list(rows[0])
        with open(self.out / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([_cell(r[c]) for c in cols])
        if plot:
            x, y = plot
            with open(self.out / f"{name}.dat", "w") as fh:
                for r in rows:
                    fh.write(f"{_cell(r[x])} {_cell(r[y])}\n")
            if self.gnuplot:
                (self.out / f"{name}.gp").write_text(
                    f"set xlabel '{x}'\nset ylabel '{y}'\nplot '{name}.dat' using 1:2 with linespoints title '{y}'\n")

    def json(self, name: str, obj) -> None:
        (self.out / name).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------- budget estimates

def _lf_steps(flow, p, d: float, variant: str, n: int, T: float, cfl: float) -> float:
    """Rough explicit step count of the flux solver."""
    from .flowlib import max_speed

    h = 2 * math.pi / n
    rate = flow.dim * (float(np.linalg.norm(p)) + 1.0 + flow.A * max_speed(flow)) / h
    if variant in ("viscous", "curvature", "quadratic") and d > 0:
        rate += 2 * flow.dim * d / (h * h)
    return T * rate / cfl


def _guard(cost: float, budget: float) -> None:
    if cost > budget:
        raise ResourceError(f"budget exceeded: estimated {cost:.3g} cell-steps > budget {budget:.3g}")


# ---------------------------------------------------------------- runners

def _spec(params: dict, flow):
    from .hjsolver import GEquationSpec

    d = float(params.get("d", 0.0))
    variant = params.get("variant") or ("inviscid" if d == 0 else "viscous")
    return GEquationSpec(variant, d=d, flow=flow)


def _flow(params: dict):
    from .flowlib import flow_from_id

    return flow_from_id(params["flow"], A=float(params.get("A", 1.0)))


def _estimate_summary(e, runtime: float) -> dict:
    return {"estimate": e.value, "envelope": [e.lower, e.upper], "converged": e.converged, "method": e.method,
            "runtime": runtime, "p": e.p, "windows": e.history.get("windows")}


def _run_hbar(params: dict, out: Outputs) -> tuple[dict, bool]:
    from .game import control_hbar
    from .grid import PeriodicGrid
    from .hjsolver import SolverConfig
    from .homog import hbar_discounted, hbar_large_time

    flow = _flow(params)
    spec = _spec(params, flow)
    p = _vec(params["p"])
    grid = PeriodicGrid(flow.dim, int(params["n"]))
    method = params["method"]
    t0 = time.perf_counter()
    if method == "large_time":
        _guard(grid.size * _lf_steps(flow, p, spec.d, spec.variant, grid.n[0], params["T"], params["cfl"]),
               params["budget"])
        cfg = SolverConfig(cfl=params["cfl"], t_end=params["T"], time_integrator=params["integrator"],
                           spatial_order=int(params["order"]))
        e = hbar_large_time(spec, p, cfg, grid)
    elif method == "discounted":
        e = hbar_discounted(spec, p, grid, lambda_schedule=_floats(params["lambdas"]))
    elif method == "control":
        if spec.variant != "inviscid":
            raise UsageError("config error: method 'control' needs the inviscid variant")
        e = control_hbar(flow, p, grid, t_end=params["T"])
    else:
        raise UsageError(f"config error: unknown method '{method}'")
    runtime = time.perf_counter() - t0
    hist = e.history
    if "times" in hist:
        out.table("mean_history", [{"t": t, "mean_v": m} for t, m in zip(hist["times"], hist["means"])],
                  plot=("t", "mean_v"))
    if "lambdas" in hist:
        out.table("discount_schedule", [{"lambda": l, "hbar_lambda": v, "osc": o, "max_abs": m} for l, v, o, m in
                                        zip(hist["lambdas"], hist["lambda_values"], hist["lambda_osc"],
                                            hist["lambda_max"])], plot=("lambda", "hbar_lambda"))
    summary = _estimate_summary(e, runtime)
    print(json.dumps(_jsonable({"estimate": e.value, "converged": e.converged, "method": e.method})))
    return summary, e.converged


def _run_sweep(params: dict, out: Outputs) -> tuple[dict, bool]:
    from .grid import PeriodicGrid
    from .hjsolver import SolverConfig
    from .homog import growth_sweep

    flow = _flow(params)
    spec = _spec(params, flow)
    p = _vec(params["p"])
    A_list = _range_or_list(params["A_list"])
    grid = PeriodicGrid(flow.dim, int(params["n"]))
    if params["method"] == "large_time":
        _guard(sum(grid.size * _lf_steps(flow.with_intensity(A), p, spec.d, spec.variant, grid.n[0], params["T"],
                                         params["cfl"]) for A in A_list), params["budget"])
    t0 = time.perf_counter()
    cfg = SolverConfig(cfl=params["cfl"], t_end=params["T"], time_integrator="euler")
    fit = growth_sweep(spec, p, A_list, grid, cfg, method=params["method"])
    runtime = time.perf_counter() - t0
    rows = [{"A": a, "hbar": h, "converged": c} for a, h, c in zip(fit.A_values, fit.H_values, fit.converged)]
    out.table("growth", rows, plot=("A", "hbar"))
    summary = fit.to_dict() | {"runtime": runtime}
    print(json.dumps(_jsonable({"A": fit.A_values, "hbar": fit.H_values, "best": fit.best})))
    return summary, not fit.partial


def _profile(params: dict):
    from .flowlib import _PROFILES_1D, Profile1D

    name = params["profile"]
    prof = Profile1D(name) if name in _PROFILES_1D else Profile1D.from_csv(name)
    amp = float(params["amplitude"])
    return prof if amp == 1.0 else (lambda y: amp * np.asarray(prof(y))), prof


def _run_exact_shear(params: dict, out: Outputs) -> tuple[dict, bool]:
    from .homog import exact_shear_hbar

    f, prof = _profile(params)
    p = _vec(params["p"])
    t0 = time.perf_counter()
    value = exact_shear_hbar(f, p, period=2 * math.pi)
    print(float(f"{value:.12g}"))
    return {"estimate": value, "p": p, "method": "exact_shear", "converged": True,
            "runtime": time.perf_counter() - t0}, True


def _run_strain_shear(params: dict, out: Outputs) -> tuple[dict, bool]:
    from .homog import strain_shear_hbar

    f, _ = _profile(params)
    t0 = time.perf_counter()
    rows = []
    for d in _floats(params["d"]):
        r = strain_shear_hbar(f, float(params["p_prime"]), d, period=2 * math.pi)
        rows.append({"d": d, "E": r.E, "dE_dd": r.dE_dd})
    out.table("strain", rows, plot=("d", "E"))
    for r in rows:
        print(f"d={r['d']:g} E={r['E']:.10g} dE/dd={r['dE_dd']:.6g}")
    return {"rows": rows, "method": "strain_ode", "converged": True, "runtime": time.perf_counter() - t0}, True


def _payoff(params: dict, grid):
    from .game import circle_payoff
    from .grid import ScalarField

    kind, _, arg = str(params["payoff"]).partition(":")
    if kind == "planar":
        return ScalarField(grid, np.zeros(grid.shape)), None
    if kind == "circle":
        vals = _floats(arg) if arg else [math.pi] * grid.dim + [1.0]
        if len(vals) != grid.dim + 1:
            raise UsageError(f"config error: circle payoff needs {grid.dim} center coordinates and a radius")
        center, r = np.array(vals[:-1]), vals[-1]
        return circle_payoff(grid, center, r), center
    raise UsageError(f"config error: unknown payoff '{params['payoff']}'")


def _run_game(params: dict, out: Outputs) -> tuple[dict, bool]:
    from .game import GameConfig, certify_upper_bound, ks3d_value, ks_trajectory, ks_value, level_radius
    from .grid import PeriodicGrid, save_csv

    flow = _flow(params)
    grid = PeriodicGrid(flow.dim, int(params["n"]))
    payoff, center = _payoff(params, grid)
    p = None if params["p"] is None else _vec(params["p"])
    cfg = GameConfig.for_horizon(params["t"], params["tau"], params["d"], flow, payoff, p=p,
                                 angles=int(params["angles"]), radii=tuple(_floats(params["radii"])),
                                 budget=params["budget"])
    per_step = grid.size * cfg.angles * len(cfg.radii) * (2 if flow.dim == 2 else 4)
    _guard(per_step * cfg.steps, params["budget"])
    t0 = time.perf_counter()
    value = ks_value(cfg) if flow.dim == 2 else ks3d_value(cfg)
    save_csv(value, out.out / "value.csv")
    summary = {"config": cfg.to_dict(), "method": "game", "converged": True}
    if center is not None and flow.dim == 2:
        summary["zero_level_radius"] = level_radius(value.values, grid, center)
    if params["x0"] is not None:
        x0 = _vec(params["x0"])
        seq = np.ones(cfg.steps) if flow.dim == 2 else np.ones((cfg.steps, 2))
        traj = ks_trajectory(x0, cfg, params["policy"], seq)
        traj.to_csv(out.out / "trajectory.csv")
        cert = certify_upper_bound(x0, cfg, params["policy"], samples=int(params["samples"]),
                                   seed=int(params["seed"]))
        summary["certificate"] = cert.to_dict()
    summary["runtime"] = time.perf_counter() - t0
    print(json.dumps(_jsonable({k: summary[k] for k in ("zero_level_radius",) if k in summary}
                               | {"horizon": cfg.horizon, "steps": cfg.steps})))
    return summary, True


def _run_reach(params: dict, out: Outputs) -> tuple[dict, bool]:
    from .game import reach_time_field
    from .grid import PeriodicGrid, save_csv

    flow = _flow(params)
    grid = PeriodicGrid(flow.dim, int(params["n"]))
    src = _vec(params["source"])
    t0 = time.perf_counter()
    field = reach_time_field(flow, src, float(params["r0"]), grid, t_max=params["t_max"])
    save_csv(field, out.out / "arrival.csv")
    reached = np.isfinite(field.values)
    summary = {"t_max": field.t_max, "reached_fraction": float(reached.mean()),
               "max_arrival": float(field.values[reached].max()) if reached.any() else None,
               "method": "reach", "converged": True, "runtime": time.perf_counter() - t0}
    print(json.dumps(_jsonable({k: summary[k] for k in ("reached_fraction", "max_arrival")})))
    return summary, True


def _run_orbit(params: dict, out: Outputs) -> tuple[dict, bool]:
    from .orbits import growth_bounds, shoot_ballistic

    flow = _flow(params)
    t0 = time.perf_counter()
    orbit = shoot_ballistic(flow.with_intensity(1.0), params["shift"], tol=float(params["tol"]))
    summary = orbit.to_dict() | {"method": "orbit", "converged": orbit.found}
    out.json("orbit.json", orbit.to_dict())
    if orbit.found:
        orbit.to_csv(out.out / "orbit_path.csv", flow.with_intensity(1.0))
        p = np.zeros(3)
        p[orbit.progress_axis] = 1.0
        A = np.arange(0.0, float(params["A_max"]) + 0.5, 1.0)
        gb = growth_bounds(orbit, flow, p, A)
        out.table("growth_bounds", gb.rows(), plot=("A", "lower"))
        summary["bounds"] = gb.to_dict()
        print(f"speed_coeff = {orbit.speed_coeff:.6f}  (t0 = {orbit.t0:.6f}, residual = {orbit.residual:.2e})")
        print(f"{'A':>6} {'lower':>12} {'upper':>12}")
        for r in gb.rows():
            print(f"{r['A']:6.2f} {r['lower']:12.6f} {r['upper']:12.6f}")
    else:
        print(f"no ballistic orbit met tol={params['tol']:g}; best residual {orbit.residual:.3e}")
    summary["runtime"] = time.perf_counter() - t0
    return summary, orbit.found


def _run_bifurcate(params: dict, out: Outputs) -> tuple[dict, bool]:
    from .flowlib import Profile2D
    from .homog import bifurcation_scan

    A_grid = _range_or_list(params["A_grid"])
    n = int(params["n"])
    _guard(len(A_grid) * 2 * n * n * 2 * params["T"] * (8 * params["d"] * (n / (2 * math.pi)) ** 2 + 1),
           params["budget"])
    t0 = time.perf_counter()
    res = bifurcation_scan(Profile2D(params["profile"]), _vec(params["p"]), params["d"], A_grid, n=n,
                           t_end=params["T"])
    out.table("bifurcation", res.rows(), plot=("A", "spread_2T"))
    summary = res.to_dict() | {"method": "bifurcation", "converged": res.A0_detected is not None,
                               "runtime": time.perf_counter() - t0}
    print(json.dumps(_jsonable({"A0_characterized": res.A0_characterized, "A0_detected": res.A0_detected})))
    return summary, True


def _run_rate(params: dict, out: Outputs) -> tuple[dict, bool]:
    from .homog import homogenization_rate

    flow = _flow(params)
    spec = _spec({"d": 0.0}, flow)
    t0 = time.perf_counter()
    res = homogenization_rate(spec, _vec(params["p"]), _floats(params["eps"]), t_fixed=params["t"],
                              cells_per_period=int(params["cells"]))
    out.table("rate", [{"eps": e, "error": er, "corrected": c} for e, er, c in
                       zip(res.eps, res.errors, res.corrected)], plot=("eps", "corrected"))
    summary = res.to_dict() | {"method": "rate", "converged": True, "runtime": time.perf_counter() - t0}
    print(json.dumps(_jsonable({"slope": res.slope, "floor": res.floor})))
    return summary, True


def _run_kpp(params: dict, out: Outputs) -> tuple[dict, bool]:
    from .grid import PeriodicGrid
    from .homog import kpp_speed

    flow = _flow(params)
    t0 = time.perf_counter()
    res = kpp_speed(flow, _vec(params["p"]), params["d"], params["f0prime"], PeriodicGrid(flow.dim, params["n"]))
    out.table("kpp_samples", [{"lambda": l, "hbar_quad": h, "objective": res.objective(l, h)}
                              for l, h in res.samples], plot=("lambda", "objective"))
    summary = res.to_dict() | {"method": "kpp", "converged": True, "runtime": time.perf_counter() - t0}
    print(json.dumps(_jsonable({"c_T": res.c_T, "lambda_star": res.lambda_star})))
    return summary, True


def _run_compare_curvature(params: dict, out: Outputs) -> tuple[dict, bool]:
    from .flowlib import FlowSpec
    from .grid import PeriodicGrid
    from .hjsolver import SolverConfig
    from .homog import curvature_comparison

    A_list = _range_or_list(params["A_list"])
    p = _vec(params["p"])
    n = int(params["n"])
    cost = sum(2 * n * n * _lf_steps(FlowSpec("cellular", A=A), p, params["d"], "curvature", n, params["T"], 0.5)
               for A in A_list)
    _guard(cost, params["budget"])
    t0 = time.perf_counter()
    res = curvature_comparison(p, params["d"], A_list, PeriodicGrid(2, n), SolverConfig(t_end=params["T"],
                                                                                        time_integrator="euler"))
    out.table("curvature_gap", res.rows(), plot=("A", "gap"))
    summary = {"rows": res.rows(), "gaps_positive": res.gaps_positive, "gaps_increasing": res.gaps_increasing,
               "method": "large_time", "converged": all(res.converged), "runtime": time.perf_counter() - t0}
    print(json.dumps(_jsonable({"gaps": res.gaps, "positive": res.gaps_positive,
                                "increasing": res.gaps_increasing})))
    return summary, all(res.converged)


_RUNNERS: dict[str, Callable] = {
    "hbar": _run_hbar, "sweep": _run_sweep, "exact-shear": _run_exact_shear, "strain-shear": _run_strain_shear,
    "game": _run_game, "reach": _run_reach, "orbit": _run_orbit, "bifurcate": _run_bifurcate, "rate": _run_rate,
    "kpp": _run_kpp, "compare-curvature": _run_compare_curvature,
}


# ---------------------------------------------------------------- entry points

def _set_threads() -> None:
    raw = os.environ.get("GEQUATION_THREADS")
    if not raw:
        return
    import numba

    try:
        k = int(raw)
    except ValueError as exc:
        raise UsageError(f"config error: GEQUATION_THREADS must be an integer, got '{raw}'") from exc
    numba.set_num_threads(max(1, min(k, numba.config.NUMBA_NUM_THREADS)))


def execute(subcommand: str, params: dict, out_dir: Path) -> int:
    """Run one resolved parameter set; writes the manifest before any compute."""
    out = Outputs(out_dir, bool(params.get("gnuplot")))
    manifest = {"artifact": "gequation", "version": __version__, "subcommand": subcommand, "params": params}
    out.json("manifest.json", manifest)
    try:
        summary, ok = _RUNNERS[subcommand](params, out)
    except NonConvergenceError as exc:
        out.json("result.json", {"converged": False, "error": str(exc), "residual": exc.residual})
        print(f"non-convergence: {exc}", file=sys.stderr)
        return 2
    summary = dict(summary)
    summary.setdefault("converged", ok)
    out.json("result.json", summary)
    return 0 if ok else 2


def replay(manifest_path: str, out_dir: str | None = None) -> int:
    """Rerun the parameter set stored in a manifest."""
    try:
        m = json.loads(Path(manifest_path).read_text())
        sub, params = m["subcommand"], m["params"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"config error: unreadable manifest {manifest_path}: {exc}") from exc
    if sub not in _RUNNERS:
        raise UsageError(f"config error: manifest names unknown subcommand '{sub}'")
    params = resolve_params(sub, {k: v for k, v in params.items() if k not in _PARAMS[sub]},
                            {k: v for k, v in params.items() if k in _PARAMS[sub]})
    return execute(sub, params, Path(out_dir) if out_dir else Path(manifest_path).parent)


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and execute; returns the exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        _set_threads()
        if argv and argv[0] == "replay":
            if len(argv) not in (2, 4) or (len(argv) == 4 and argv[2] != "--out"):
                raise UsageError("usage error: gequation replay MANIFEST [--out DIR]")
            return replay(argv[1], argv[3] if len(argv) == 4 else None)
        ns = vars(build_parser().parse_args(argv))
        sub = ns.pop("subcommand")
        config = _load_config(ns["config"]) if "config" in ns else None
        params = resolve_params(sub, ns, config)
        out_dir = Path(ns.get("out") or Path("out") / sub)
        return execute(sub, params, out_dir)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except ResourceError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return 1
    except GEquationError as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
