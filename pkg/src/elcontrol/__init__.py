"""Eulerian-Lagrangian solvers and initial-datum control for local and nonlocal traffic flow."""

__version__ = "0.1.0"

from .grid import (  # noqa: E402
    AdmissibleSpec,
    CellField,
    Grid1D,
    l1_distance,
    make_grid,
    project_admissible,
    project_function,
    total_variation,
)
from .kernels import KernelSpec, discrete_weights  # noqa: E402
from .objectives import Objective, ObjectiveSpec, ObjectiveTerm, ReferenceSolution, evaluate  # noqa: E402
from .optimize import OptimizationReport, OptimizerConfig, fd_gradient, minimize  # noqa: E402
from .scheme import SchemeConfig, SpeedLaw, Trajectory, compute_dt, run  # noqa: E402

__all__ = [
    "AdmissibleSpec", "CellField", "Grid1D", "KernelSpec", "Objective", "ObjectiveSpec", "ObjectiveTerm",
    "OptimizationReport", "OptimizerConfig", "ReferenceSolution", "SchemeConfig", "SpeedLaw", "Trajectory",
    "compute_dt", "discrete_weights", "evaluate", "fd_gradient", "l1_distance", "make_grid", "minimize",
    "project_admissible", "project_function", "run", "total_variation",
]
