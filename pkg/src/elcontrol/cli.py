"""Command-line front end: ``solve``, ``optimize`` and ``study``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .grid import AdmissibleSpec, CellField, make_grid, project_admissible, project_function
from .io import (
    find_manifest,
    new_run_id,
    now,
    read_trajectory,
    write_csv,
    write_field,
    write_manifest,
    write_trajectory,
)
from .kernels import KernelSpec
from .objectives import Objective, ObjectiveSpec, ObjectiveTerm, ReferenceSolution
from .optimize import ArmijoConfig, OptimizerConfig, minimize
from .scheme import SchemeConfig, SpeedLaw, compute_dt, fitted_dt, run
from .studies import COLUMNS, DATA, StudySpec, make_reference, run_study

logger = logging.getLogger("elcontrol")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_scheme(cfg: dict, speed: SpeedLaw, store_every: int | None = None) -> SchemeConfig:
    s = cfg["scheme"]
    if s["dt"] is not None:
        dt = s["dt"]
    elif s["cfl_factor"] is not None:
        dt = compute_dt(s["dx"], speed, s["cfl_factor"])
    else:
        dt = fitted_dt(s["dx"], s["T"])
    return SchemeConfig(dx=s["dx"], dt=dt, T=s["T"], H=s["H"], kernel=KernelSpec(cfg["kernel"]["shape"]),
                        boundary=s["boundary"], store_every=store_every or s["store_every"])


def build_datum(cfg: dict, default_kind: str) -> CellField:
    d = cfg["datum"]
    kind = d.get("kind") or default_kind
    lo, hi = cfg["scheme"]["domain"]
    grid = make_grid(lo, hi, cfg["scheme"]["dx"])
    if kind in DATA:
        return project_function(DATA[kind], grid)
    if kind == "riemann":
        return project_function(lambda x: d["value"] * (x >= 0), grid)
    if kind == "constant":
        return CellField(grid, np.full(grid.n_cells, float(d["value"])))
    data = np.loadtxt(d["path"], delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != grid.n_cells:
        raise ConfigError(f"datum file {d['path']} has {data.shape[0]} rows, grid has {grid.n_cells} cells")
    return CellField(grid, data[:, -1])


def resolve_reference(spec: dict, scheme: SchemeConfig, cfg: dict) -> ReferenceSolution:
    if "manifest" in spec or "run_id" in spec:
        path = Path(spec["manifest"]) if "manifest" in spec else find_manifest(spec["run_id"], Path(spec.get("search", ".")))
        man = json.loads(path.read_text(encoding="utf-8"))
        rc = man["config"]["scheme"]
        ref_cfg = SchemeConfig(dx=rc["dx"], dt=man["resolved_dt"], T=rc["T"], H=rc["H"], store_every=1)
        traj = read_trajectory(path.parent / "trajectory.csv", ref_cfg)
        return ReferenceSolution(traj, f"run:{man['run_id']}")
    kind = spec.get("kind", "local")
    return make_reference(kind, spec.get("H"), T=scheme.T, kernel=cfg["kernel"]["shape"], speed=cfg["speed"]["law"])


def build_objective(cfg: dict, grid, scheme: SchemeConfig, speed: SpeedLaw) -> Objective:
    terms = []
    for t in cfg["objective"]["terms"]:
        ref = resolve_reference(t["reference"], scheme, cfg) if t["kind"] != "bv_regularization" else None
        terms.append(ObjectiveTerm(t["kind"], float(t["weight"]), tuple(t["window"]), ref, float(t["p"])))
    return Objective(ObjectiveSpec(terms), grid, scheme, speed)


def build_optimizer(cfg: dict, workers: int | None = None) -> OptimizerConfig:
    o = cfg["optimizer"]
    return OptimizerConfig(
        max_iterations=int(o["max_iterations"]),
        max_evaluations=int(o["max_evaluations"]),
        step_tolerance=o["step_tolerance"],
        optimality_tolerance=o["optimality_tolerance"],
        fd_step=float(o["fd_step"]),
        initial_step=float(o["initial_step"]),
        armijo=ArmijoConfig(float(o["armijo"]["c"]), float(o["armijo"]["shrink"]), int(o["armijo"]["max_backtracks"])),
        workers=workers or int(o["workers"]),
    )


def build_admissible(cfg: dict) -> AdmissibleSpec:
    a = cfg["admissible"]
    return AdmissibleSpec(float(a["box_lo"]), float(a["box_hi"]),
                          float("inf") if a["tv_bound"] is None else float(a["tv_bound"]),
                          None if a["support"] is None else tuple(a["support"]))


def cmd_solve(cfg: dict, out: Path, args) -> int:
    started, t0 = now(), time.perf_counter()
    speed = SpeedLaw(cfg["speed"]["law"])
    scheme = build_scheme(cfg, speed, args.store_every)
    datum = build_datum(cfg, "bump")
    traj = run(datum, speed, scheme)
    cfg["datum"]["kind"] = cfg["datum"]["kind"] or "bump"
    cfg["scheme"]["store_every"] = scheme.store_every
    path = write_trajectory(out / "trajectory.csv", traj)
    write_manifest(out, "solve", cfg, [path], started, new_run_id(),
                   {"wall_time_s": time.perf_counter() - t0, "resolved_dt": scheme.dt, "n_steps": scheme.n_steps,
                    "u_min": traj.u_min, "u_max": traj.u_max})
    logger.info("solve: %d steps, wrote %s", scheme.n_steps, path)
    return EXIT_OK


def cmd_optimize(cfg: dict, out: Path, args) -> int:
    started, t0 = now(), time.perf_counter()
    speed = SpeedLaw(cfg["speed"]["law"])
    scheme = build_scheme(cfg, speed, 1)
    admissible = build_admissible(cfg)
    start = project_admissible(build_datum(cfg, "step"), admissible).field
    cfg["datum"]["kind"] = cfg["datum"]["kind"] or "step"
    objective = build_objective(cfg, start.grid, scheme, speed)
    opt = build_optimizer(cfg, args.parallel if args.parallel > 1 else None)
    rep = minimize(objective, start, admissible, opt)
    resolved = opt.resolved(start.grid.dx)
    cfg["optimizer"]["step_tolerance"] = resolved.step_tolerance
    cfg["optimizer"]["optimality_tolerance"] = resolved.optimality_tolerance
    p1 = write_field(out / "minimizer.csv", rep.minimizer)
    p2 = write_csv(out / "history.csv", ["iter", "value", "optimality", "step"],
                   [(i, v, o, s) for i, (v, o, s) in enumerate(rep.history)])
    summary = {
        "objective_value": rep.objective_value, "initial_value": rep.initial_value, "iterations": rep.iterations,
        "evaluations": rep.evaluations, "first_order_optimality": rep.first_order_optimality,
        "termination": rep.termination, "tv": rep.tv, "within_tv_bound": rep.within_tv_bound,
    }
    write_manifest(out, "optimize", cfg, [p1, p2], started, new_run_id(),
                   {"wall_time_s": time.perf_counter() - t0, "resolved_dt": scheme.dt, "report": summary})
    logger.info("optimize: value %.4e after %d iterations (%s)", rep.objective_value, rep.iterations, rep.termination)
    return EXIT_OK


def cmd_study(cfg: dict, out: Path, args) -> int:
    started, t0 = now(), time.perf_counter()
    s = cfg["study"]
    spec = StudySpec(kind=s["kind"], dx_list=tuple(s["dx_list"]), H_list=tuple(s["H_list"]), dx=s["dx"], H=s["H"],
                     coupling=s["coupling"], T=s["T"], datum=s["datum"], start=s["start"],
                     kernel=cfg["kernel"]["shape"], speed=cfg["speed"]["law"],
                     optimizer=build_optimizer(cfg), admissible=build_admissible(cfg))
    result = run_study(spec, parallel=args.parallel)
    paths = [write_csv(out / "study_rows.csv", COLUMNS, [[getattr(r, c) for c in COLUMNS] for r in result.rows])]
    for name, (header, rows) in result.curves.items():
        paths.append(write_csv(out / f"{name}.csv", header, rows))
    if not args.no_plots:
        from .plotting import render_all

        paths.extend(render_all(result.curves, out))
    status = "failed" if result.failed else "ok"
    write_manifest(out, "study", cfg, paths, started, new_run_id(),
                   {"wall_time_s": time.perf_counter() - t0, "status": status})
    if result.failed:
        logger.error("study: every row failed")
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "optimize": cmd_optimize, "study": cmd_study}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elcontrol", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "run the scheme and write trajectory snapshots"),
                        ("optimize", "minimize the configured objective over the initial datum"),
                        ("study", "run a convergence study and write its tables and series")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, type=Path, help="YAML configuration file")
        sp.add_argument("--out", required=True, type=Path, help="output directory")
        sp.add_argument("--parallel", type=int, default=1, help="worker count for independent evaluations")
        sp.add_argument("--store-every", type=int, default=None, help="keep every k-th time step (solve)")
        sp.add_argument("--quiet", action="store_true", help="only report warnings and errors")
        if name == "study":
            sp.add_argument("--no-plots", action="store_true", help="skip PNG figures, write CSV series only")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = load_config(args.config)
        if args.parallel < 1:
            raise ConfigError("--parallel must be >= 1")
        if args.store_every is not None and args.store_every < 1:
            raise ConfigError("--store-every must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args.out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
