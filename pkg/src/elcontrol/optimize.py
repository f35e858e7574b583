"""Box-constrained descent on cell values with finite-difference gradients."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grid import AdmissibleSpec, CellField, total_variation

logger = logging.getLogger(__name__)

TERMINATIONS = ("step_tol", "optimality_tol", "max_iter", "max_eval")

# rows per batched objective call during gradient probes
_CHUNK = 128


@dataclass(frozen=True)
class ArmijoConfig:
    c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 1000
    max_evaluations: int = 100_000
    step_tolerance: float | None = None  # None: dx**3
    optimality_tolerance: float | None = None  # None: dx**2
    fd_step: float = 1e-6
    initial_step: float = 1.0
    armijo: ArmijoConfig = field(default_factory=ArmijoConfig)
    workers: int = 1

    def __post_init__(self) -> None:
        for name in ("max_iterations", "max_evaluations", "fd_step", "initial_step", "workers"):
            if not getattr(self, name) > 0:
                raise ValueError(f"optimizer option {name} must be positive")
        for name in ("step_tolerance", "optimality_tolerance"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"optimizer option {name} must be positive")
        if not 0 < self.armijo.shrink < 1 or not 0 < self.armijo.c < 1 or self.armijo.max_backtracks < 1:
            raise ValueError("invalid Armijo parameters")

    def resolved(self, dx: float) -> OptimizerConfig:
        return replace(
            self,
            step_tolerance=dx**3 if self.step_tolerance is None else self.step_tolerance,
            optimality_tolerance=dx**2 if self.optimality_tolerance is None else self.optimality_tolerance,
        )


@dataclass(eq=False)
class OptimizationReport:
    minimizer: CellField
    objective_value: float
    iterations: int
    evaluations: int
    first_order_optimality: float
    termination: str
    history: list[tuple[float, float, float]]
    initial_value: float
    tv: float
    within_tv_bound: bool
    pinned_cells: int = 0
    iterates: list[np.ndarray] = field(default_factory=list, repr=False)

    def same_as(self, other: OptimizationReport) -> bool:
        return (
            self.minimizer == other.minimizer
            and self.objective_value == other.objective_value
            and self.iterations == other.iterations
            and self.evaluations == other.evaluations
            and self.first_order_optimality == other.first_order_optimality
            and self.termination == other.termination
            and self.history == other.history
        )


class _Counted:
    """Wraps an objective, counting evaluations and batching when possible."""

    def __init__(self, objective: Callable):
        self.objective = objective
        self.count = 0

    def one(self, u: np.ndarray) -> float:
        self.count += 1
        return float(self.objective(u))

    def many(self, U: np.ndarray, workers: int = 1) -> np.ndarray:
        self.count += U.shape[0]
        batch = getattr(self.objective, "batch", None)
        if batch is None:
            return np.array([float(self.objective(row)) for row in U])
        chunks = [U[i : i + _CHUNK] for i in range(0, U.shape[0], _CHUNK)]
        if workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(batch, chunks))
        else:
            parts = [batch(c) for c in chunks]
        return np.concatenate(parts)


def _probe_matrix(u: np.ndarray, h: float, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    up = np.minimum(u + h, hi)
    down = np.maximum(u - h, lo)
    # forward difference unless the upper bound eats more than half the step
    probe = np.where(up - u >= 0.5 * h, up, down)
    disp = probe - u
    P = np.repeat(u[None, :], len(u), axis=0)
    P[np.arange(len(u)), np.arange(len(u))] = probe
    return P, disp


def _fd_gradient(f: _Counted, u: np.ndarray, f0: float, h: float, lo: float, hi: float,
                 workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    P, disp = _probe_matrix(u, h, lo, hi)
    vals = f.many(P, workers)
    pinned = disp == 0.0
    g = np.where(pinned, 0.0, (vals - f0) / np.where(pinned, 1.0, disp))
    return g, pinned


def fd_gradient(objective: Callable, u, h: float = 1e-6, box: tuple[float, float] = (0.0, 1.0),
                workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """One-sided difference quotients per cell, probes kept inside ``box``.

    Returns ``(gradient, pinned)``; ``pinned`` flags cells with no room to move.
    """
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    vals = u.values if isinstance(u, CellField) else np.asarray(u, dtype=float)
    f = _Counted(objective)
    return _fd_gradient(f, vals, f.one(vals), h, box[0], box[1], workers)


def minimize(objective: Callable, u_start: CellField, admissible: AdmissibleSpec | None = None,
             cfg: OptimizerConfig | None = None, keep_iterates: bool = False) -> OptimizationReport:
    """Projected gradient descent with Armijo backtracking along the projection arc.

    The search direction is the L2 gradient (partial derivatives divided by dx),
    so the default unit step is commensurate with cell values.
    """
    admissible = admissible or AdmissibleSpec()
    dx = u_start.grid.dx
    cfg = (cfg or OptimizerConfig()).resolved(dx)
    lo, hi = admissible.box_lo, admissible.box_hi
    arm = cfg.armijo
    f = _Counted(objective)

    def proj(v: np.ndarray) -> np.ndarray:
        return np.clip(v, lo, hi)

    x = proj(u_start.values.copy())
    if not np.array_equal(x, u_start.values):
        raise ValueError("starting point is not inside the box")
    fx = f.one(x)
    initial = fx
    history: list[tuple[float, float, float]] = []
    iterates = [x.copy()] if keep_iterates else []
    termination = "max_iter"
    it = 0
    g, pinned = _fd_gradient(f, x, fx, cfg.fd_step, lo, hi, cfg.workers)
    direction = g / dx
    optimality = float(np.max(np.abs(proj(x - direction) - x)))
    history.append((fx, optimality, 0.0))

    while True:
        if optimality <= cfg.optimality_tolerance:
            termination = "optimality_tol"
            break
        if it >= cfg.max_iterations:
            termination = "max_iter"
            break
        if f.count + 1 > cfg.max_evaluations:
            termination = "max_eval"
            break
        alpha = cfg.initial_step
        accepted = False
        for _ in range(arm.max_backtracks):
            trial = proj(x - alpha * direction)
            if f.count + 1 > cfg.max_evaluations:
                break
            ft = f.one(trial)
            if ft <= fx + arm.c * float(np.dot(g, trial - x)):
                accepted = True
                break
            alpha *= arm.shrink
        if not accepted:
            termination = "max_eval" if f.count + 1 > cfg.max_evaluations else "step_tol"
            break
        step = float(np.max(np.abs(trial - x)))
        x, fx = trial, ft
        it += 1
        if keep_iterates:
            iterates.append(x.copy())
        if step <= cfg.step_tolerance:
            history.append((fx, optimality, step))
            termination = "step_tol"
            break
        if f.count + len(x) > cfg.max_evaluations:
            history.append((fx, optimality, step))
            termination = "max_eval"
            break
        g, pinned = _fd_gradient(f, x, fx, cfg.fd_step, lo, hi, cfg.workers)
        direction = g / dx
        optimality = float(np.max(np.abs(proj(x - direction) - x)))
        history.append((fx, optimality, step))
        logger.debug("iter %d: value %.6e optimality %.3e step %.3e", it, fx, optimality, step)

    minimizer = CellField(u_start.grid, x)
    tv = total_variation(minimizer)
    return OptimizationReport(
        minimizer=minimizer,
        objective_value=fx,
        iterations=it,
        evaluations=f.count,
        first_order_optimality=optimality,
        termination=termination,
        history=history,
        initial_value=initial,
        tv=tv,
        within_tv_bound=tv <= admissible.tv_bound,
        pinned_cells=int(np.sum(pinned)),
        iterates=iterates,
    )
