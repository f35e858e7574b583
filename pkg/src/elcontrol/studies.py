"""Experiment harness: reference runs, grid convergence and nonlocal-to-local sweeps."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .grid import (
    AdmissibleSpec,
    CellField,
    Grid1D,
    grid_with_cells,
    l1_distance,
    l1_distance_across_grids,
    l1_norm,
    make_grid,
    project_admissible,
    project_function,
)
from .kernels import KernelSpec
from .objectives import ReferenceSolution, tracking_objective
from .optimize import OptimizationReport, OptimizerConfig, minimize
from .scheme import SchemeConfig, SpeedLaw, fitted_dt, run

logger = logging.getLogger(__name__)

DOMAIN = (-1.0, 1.0)
HORIZON = 0.25
REF_DX = 0.002
REF_DT = 0.001
DT_RATIO = 0.5
STUDY_KINDS = ("grid_convergence_local", "grid_convergence_nonlocal", "gamma_minimizers", "double_limit",
               "nl2l_solutions")
COUPLINGS = ("half", "power")


def reference_datum(x):
    return np.where(np.abs(x) <= 0.5, -x**2 + 0.25, 0.0) + 0.2


def initial_guess(x):
    return 0.25 * (x >= 0) + 0.2


DATA = {"bump": reference_datum, "step": initial_guess}


@lru_cache(maxsize=8)
def make_reference(kind: str = "local", H: float | None = None, dx: float = REF_DX, dt: float = REF_DT,
                   T: float = HORIZON, kernel: str = "affine", speed: str = "greenshields") -> ReferenceSolution:
    if kind not in ("local", "nonlocal"):
        raise ValueError(f"reference kind must be 'local' or 'nonlocal', got {kind!r}")
    if kind == "nonlocal" and H is None:
        raise ValueError("a nonlocal reference needs a kernel width H")
    H = H if kind == "nonlocal" else None
    grid = make_grid(*DOMAIN, dx)
    datum = project_function(reference_datum, grid)
    cfg = SchemeConfig(dx=dx, dt=dt, T=T, H=H, kernel=KernelSpec(kernel), store_every=1)
    traj = run(datum, SpeedLaw(speed), cfg)
    return ReferenceSolution(traj, "local" if H is None else f"nonlocal({H:g})")


def coarse_grid(dx: float) -> Grid1D:
    """Grid on the study domain; non-dividing mesh sizes snap to the nearest whole cell count."""
    span = DOMAIN[1] - DOMAIN[0]
    try:
        return make_grid(*DOMAIN, dx)
    except ValueError:
        return grid_with_cells(*DOMAIN, max(1, round(span / dx)))


@dataclass
class StudyRow:
    dx: float
    H: float | None
    l1_relative_error: float
    objective_value: float
    iterations: int
    first_order_optimality: float
    evaluations: int = 0
    termination: str = ""
    tv: float = math.nan
    status: str = "ok"


COLUMNS = tuple(StudyRow.__dataclass_fields__)


@dataclass
class StudySpec:
    kind: str
    dx_list: Sequence[float] = (0.08, 0.04, 0.02, 0.01)
    H_list: Sequence[float] = (0.08, 0.04, 0.02, 0.01, 0.005)
    dx: float = 0.01
    H: float = 0.5
    coupling: str = "half"
    T: float = HORIZON
    datum: str = "bump"
    start: str = "step"
    kernel: str = "affine"
    speed: str = "greenshields"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    admissible: AdmissibleSpec = field(default_factory=AdmissibleSpec)

    def __post_init__(self) -> None:
        if self.kind not in STUDY_KINDS:
            raise ValueError(f"unknown study kind {self.kind!r}; known: {STUDY_KINDS}")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"unknown coupling {self.coupling!r}; known: {COUPLINGS}")
        for name in ("dx_list", "H_list"):
            seq = list(getattr(self, name))
            if not seq:
                raise ValueError(f"{name} must not be empty")
            d = np.diff(seq)
            if len(seq) > 1 and not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError(f"{name} must be strictly monotone")
        if self.datum not in DATA or self.start not in DATA:
            raise ValueError(f"data descriptors must be one of {sorted(DATA)}")


@dataclass
class StudyResult:
    kind: str
    rows: list[StudyRow]
    curves: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return bool(self.rows) and all(r.status != "ok" for r in self.rows)


@dataclass(frozen=True)
class _Cell:
    """One optimization problem of a study, built from plain values so it pickles."""

    dx: float
    H: float | None
    T: float
    ref_kind: str
    ref_H: float | None
    start: str
    kernel: str
    speed: str
    optimizer: OptimizerConfig
    admissible: AdmissibleSpec


def _solve_cell(cell: _Cell) -> tuple[StudyRow, np.ndarray | None, OptimizationReport | None]:
    try:
        ref = make_reference(cell.ref_kind, cell.ref_H, T=cell.T, kernel=cell.kernel, speed=cell.speed)
        grid = coarse_grid(cell.dx)
        speed = SpeedLaw(cell.speed)
        scheme = SchemeConfig(dx=grid.dx, dt=fitted_dt(grid.dx, cell.T, DT_RATIO), T=cell.T, H=cell.H,
                              kernel=KernelSpec(cell.kernel))
        objective = tracking_objective(ref, grid, scheme, speed, DOMAIN)
        start = project_admissible(project_function(DATA[cell.start], grid), cell.admissible).field
        rep = minimize(objective, start, cell.admissible, cell.optimizer)
        err = l1_distance_across_grids(rep.minimizer, ref.initial, DOMAIN) / l1_norm(ref.initial, DOMAIN)
        row = StudyRow(grid.dx, cell.H, err, rep.objective_value, rep.iterations, rep.first_order_optimality,
                       rep.evaluations, rep.termination, rep.tv)
        logger.info("dx=%g H=%s: error %.3e value %.3e (%s)", grid.dx, cell.H, err, rep.objective_value,
                    rep.termination)
        return row, rep.minimizer.values, rep
    except Exception as exc:  # failed rows are recorded and the study continues
        logger.error("dx=%g H=%s failed: %s", cell.dx, cell.H, exc)
        row = StudyRow(cell.dx, cell.H, math.nan, math.nan, 0, math.nan, status=f"failed: {exc}")
        return row, None, None


def _solve_all(cells: list[_Cell], parallel: int = 1):
    if parallel > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_solve_cell, cells))
    return [_solve_cell(c) for c in cells]


def _cell(spec: StudySpec, dx: float, H: float | None, ref_kind: str = "local", ref_H: float | None = None,
          optimizer: OptimizerConfig | None = None) -> _Cell:
    return _Cell(dx, H, spec.T, ref_kind, ref_H, spec.start, spec.kernel, spec.speed,
                 optimizer or spec.optimizer, spec.admissible)


def _minimizer_curve(grid: Grid1D, ref: ReferenceSolution, columns: dict[str, np.ndarray | None]):
    target = ref.initial
    idx = np.clip(np.floor((grid.midpoints - target.grid.x_min) / target.grid.dx).astype(int), 0,
                  target.grid.n_cells - 1)
    header = ["x", "U_o_d"] + list(columns)
    rows = []
    for j, x in enumerate(grid.midpoints):
        rows.append([x, target.values[idx[j]]] + [math.nan if v is None else v[j] for v in columns.values()])
    return header, rows


def grid_convergence_study(spec: StudySpec, parallel: int = 1) -> StudyResult:
    nonlocal_ = spec.kind == "grid_convergence_nonlocal"
    H = spec.H if nonlocal_ else None
    ref_kind = "nonlocal" if nonlocal_ else "local"
    cells = [_cell(spec, dx, H, ref_kind, H) for dx in spec.dx_list]
    out = _solve_all(cells, parallel)
    rows = [r for r, _, _ in out]
    result = StudyResult(spec.kind, rows)
    result.curves["fig_grid_convergence"] = (
        ["dx", "l1_relative_error", "objective_value"],
        [[r.dx, r.l1_relative_error, r.objective_value] for r in rows],
    )
    finest = int(np.argmin(spec.dx_list))
    ref = make_reference(ref_kind, H, T=spec.T, kernel=spec.kernel, speed=spec.speed)
    name = "fig_nonlocal_minimizers" if nonlocal_ else "fig_local_minimizers"
    result.curves[name] = _minimizer_curve(coarse_grid(spec.dx_list[finest]), ref, {"U_o_min": out[finest][1]})
    return result


def gamma_minimizers_study(spec: StudySpec, parallel: int = 1) -> StudyResult:
    """Minimize the local functional and the nonlocal ones for each H on one mesh."""
    H_list = list(spec.H_list)
    cells = [_cell(spec, spec.dx, None)] + [_cell(spec, spec.dx, H) for H in H_list]
    out = _solve_all(cells, parallel)
    local_row, local_min, _ = out[0]
    grid = coarse_grid(spec.dx)
    rows = [local_row]
    curve = []
    for H, (row, u, _) in zip(H_list, out[1:]):
        if u is not None and local_min is not None:
            a, b = CellField(grid, u), CellField(grid, local_min)
            err = l1_distance(a, b, DOMAIN) / l1_distance(b, CellField(grid, np.zeros(grid.n_cells)), DOMAIN)
        else:
            err = math.nan
        curve.append([H, err])
        rows.append(row)
    result = StudyResult(spec.kind, rows)
    result.curves["fig_discrete_gamma_conv"] = (["H", "relative_error_to_local_minimizer"], curve)
    ref = make_reference("local", T=spec.T, kernel=spec.kernel, speed=spec.speed)
    cols = {"local": local_min}
    cols.update({f"H={H:g}": u for H, (_, u, _) in zip(H_list, out[1:])})
    result.curves["fig_gamma_minimizers"] = _minimizer_curve(grid, ref, cols)
    return result


def coupled_mesh(H: float, coupling: str) -> float:
    if coupling == "half":
        return H / 2.0
    if coupling == "power":
        return H**1.1
    raise ValueError(f"unknown coupling {coupling!r}")


def double_limit_study(spec: StudySpec, parallel: int = 1) -> StudyResult:
    H_list = list(spec.H_list)
    meshes = [coupled_mesh(H, spec.coupling) for H in H_list]
    smallest = min(meshes)
    opt = replace(spec.optimizer,
                  step_tolerance=spec.optimizer.step_tolerance or smallest**3,
                  optimality_tolerance=spec.optimizer.optimality_tolerance or smallest**2)
    cells = [_cell(spec, dx, H, optimizer=opt) for dx, H in zip(meshes, H_list)]
    out = _solve_all(cells, parallel)
    rows = [r for r, _, _ in out]
    result = StudyResult(spec.kind, rows)
    result.curves["fig_diagonal_gamma_conv"] = (
        ["H", "dx_nominal", "dx", "l1_relative_error", "objective_value"],
        [[H, m, r.dx, r.l1_relative_error, r.objective_value] for H, m, r in zip(H_list, meshes, rows)],
    )
    return result


def nl2l_solutions_study(u_o: CellField, H_list: Sequence[float], T: float = HORIZON, kernel: str = "affine",
                         speed: str = "greenshields") -> list[tuple[float, float]]:
    """Sup-in-time L1 gap between nonlocal runs and the local run from the same datum."""
    dx = u_o.grid.dx
    dt = fitted_dt(dx, T, DT_RATIO)
    law = SpeedLaw(speed)
    local = run(u_o, law, SchemeConfig(dx=dx, dt=dt, T=T, store_every=1))
    curve = []
    for H in H_list:
        nl = run(u_o, law, SchemeConfig(dx=dx, dt=dt, T=T, H=H, kernel=KernelSpec(kernel), store_every=1))
        gap = float(np.max(np.sum(np.abs(nl.values - local.values), axis=1)) * dx)
        curve.append((H, gap))
    return curve


def run_study(spec: StudySpec, parallel: int = 1) -> StudyResult:
    if spec.kind.startswith("grid_convergence"):
        return grid_convergence_study(spec, parallel)
    if spec.kind == "gamma_minimizers":
        return gamma_minimizers_study(spec, parallel)
    if spec.kind == "double_limit":
        return double_limit_study(spec, parallel)
    u_o = project_function(DATA[spec.datum], coarse_grid(spec.dx))
    curve = nl2l_solutions_study(u_o, spec.H_list, spec.T, spec.kernel, spec.speed)
    result = StudyResult(spec.kind, [])
    result.curves["fig_nl2l_solutions"] = (["H", "sup_l1_gap"], [list(c) for c in curve])
    return result


def row_dict(row: StudyRow) -> dict:
    return asdict(row)
