"""Tracking-type and regularization functionals of the initial datum."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import CellField, Grid1D, GridError, total_variation
from .scheme import SchemeConfig, SpeedLaw, Trajectory, iterate

_TIME_TOL = 1e-12

KINDS = ("distributed_tracking", "final_time_tracking", "bv_regularization")


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    trajectory: Trajectory
    provenance: str = "local"

    def __post_init__(self) -> None:
        if not self.trajectory.every_step:
            raise ObjectiveError("reference trajectory must be stored at every time step")

    @property
    def grid(self) -> Grid1D:
        return self.trajectory.grid

    @property
    def T(self) -> float:
        return float(self.trajectory.times[-1])

    @property
    def initial(self) -> CellField:
        return self.trajectory.initial


def _time_indices(ref: ReferenceSolution, t: np.ndarray) -> np.ndarray:
    times = ref.trajectory.times
    if np.any(t < -_TIME_TOL) or np.any(t > times[-1] + _TIME_TOL):
        raise ObjectiveError(f"query time outside reference horizon [0, {times[-1]}]")
    return np.searchsorted(times, t + _TIME_TOL, side="right") - 1


def _cell_indices(grid: Grid1D, x: np.ndarray) -> np.ndarray:
    if np.any(x < grid.x_min - 1e-12) or np.any(x > grid.x_max + 1e-12):
        raise ObjectiveError(f"query position outside reference extent [{grid.x_min}, {grid.x_max}]")
    return np.clip(np.floor((x - grid.x_min) / grid.dx).astype(int), 0, grid.n_cells - 1)


def sample_reference(ref: ReferenceSolution, t: float, x: float) -> float:
    """Reference value in the cell containing ``x`` at the latest stored time <= ``t``."""
    m = _time_indices(ref, np.array([t], dtype=float))[0]
    j = _cell_indices(ref.grid, np.array([x], dtype=float))[0]
    return float(ref.trajectory.values[m, j])


def sample_reference_table(ref: ReferenceSolution, times: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`sample_reference` on the tensor grid ``times x xs``."""
    mi = _time_indices(ref, np.asarray(times, dtype=float))
    ji = _cell_indices(ref.grid, np.asarray(xs, dtype=float))
    return ref.trajectory.values[np.ix_(mi, ji)]


def distributed_tracking(traj: Trajectory, ref: ReferenceSolution, window: tuple[float, float]) -> float:
    if not traj.every_step:
        raise ObjectiveError("distributed tracking needs a trajectory stored at every step")
    mask = traj.grid.midpoint_mask(window)
    table = sample_reference_table(ref, traj.times, traj.grid.midpoints[mask])
    total = 0.0
    for m in range(len(traj.steps)):
        total += float(np.sum(np.abs(traj.values[m][mask] - table[m])))
    return total * (traj.grid.dx * traj.config.dt)


def final_time_tracking(f: CellField, target: CellField, p: float = 1.0, window: tuple[float, float] | None = None) -> float:
    if f.grid != target.grid:
        raise GridError(f"grid mismatch: {f.grid} vs {target.grid}")
    if p < 1:
        raise ObjectiveError(f"exponent p must be >= 1, got {p}")
    sl = slice(None) if window is None else f.grid.window_slice(window)
    d = np.abs(f.values[sl] - target.values[sl])
    return float(np.sum(d if p == 1 else d**p) * f.grid.dx)


def bv_regularization(f: CellField) -> float:
    return total_variation(f)


@dataclass(frozen=True, eq=False)
class ObjectiveTerm:
    kind: str
    weight: float = 1.0
    window: tuple[float, float] = (-1.0, 1.0)
    reference: ReferenceSolution | None = None
    p: float = 1.0
    target: CellField | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ObjectiveError(f"unknown objective term {self.kind!r}; known: {KINDS}")
        if self.weight < 0:
            raise ObjectiveError("term weights must be non-negative")
        if self.kind == "distributed_tracking" and self.reference is None:
            raise ObjectiveError("distributed_tracking needs a reference solution")
        if self.kind == "final_time_tracking" and self.reference is None and self.target is None:
            raise ObjectiveError("final_time_tracking needs a target field or a reference solution")


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    terms: Sequence[ObjectiveTerm] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.terms:
            raise ObjectiveError("objective needs at least one term")
        object.__setattr__(self, "terms", tuple(self.terms))


class Objective:
    """A functional of the initial datum bound to a grid, a scheme and a speed law.

    Calling it on a 1-D array (or a CellField) returns a float; ``batch`` maps
    a ``(B, n_cells)`` array to ``B`` values with identical bits per row.
    """

    def __init__(self, spec: ObjectiveSpec, grid: Grid1D, scheme: SchemeConfig, speed: SpeedLaw | None = None):
        if abs(grid.dx - scheme.dx) > 1e-12 * grid.dx:
            raise ObjectiveError(f"grid dx={grid.dx} differs from scheme dx={scheme.dx}")
        self.spec = spec
        self.grid = grid
        self.scheme = scheme
        self.speed = speed or SpeedLaw()
        M = scheme.n_steps
        times = np.arange(M + 1) * scheme.dt
        self._tracking = []
        self._final = []
        self._bv = []
        for term in spec.terms:
            if term.kind == "distributed_tracking":
                mask = grid.midpoint_mask(term.window)
                table = sample_reference_table(term.reference, times, grid.midpoints[mask])
                self._tracking.append((term.weight, mask, table))
            elif term.kind == "final_time_tracking":
                sl = grid.window_slice(term.window)
                if term.target is not None:
                    if term.target.grid != grid:
                        raise GridError(f"target grid {term.target.grid} differs from {grid}")
                    target = term.target.values[sl]
                else:
                    target = sample_reference_table(term.reference, times[-1:], grid.midpoints[sl])[0]
                self._final.append((term.weight, sl, target, term.p))
            else:
                self._bv.append(term.weight)
        self.n_evaluations = 0

    def __call__(self, u) -> float:
        vals = u.values if isinstance(u, CellField) else np.asarray(u, dtype=float)
        return float(self.batch(vals[None, :])[0])

    def batch(self, U0: np.ndarray) -> np.ndarray:
        U0 = np.asarray(U0, dtype=float)
        if U0.ndim != 2 or U0.shape[1] != self.grid.n_cells:
            raise ObjectiveError(f"expected shape (B, {self.grid.n_cells}), got {U0.shape}")
        self.n_evaluations += U0.shape[0]
        B = U0.shape[0]
        M = self.scheme.n_steps
        scale = self.grid.dx * self.scheme.dt
        acc = [np.zeros(B) for _ in self._tracking]
        out = np.zeros(B)
        for m, U in iterate(U0, self.speed, self.scheme):
            for i, (_, mask, table) in enumerate(self._tracking):
                acc[i] += _row_sums(np.abs(U[:, mask] - table[m]))
            if m == M:
                for w, sl, target, p in self._final:
                    d = np.abs(U[:, sl] - target)
                    out += w * (_row_sums(d if p == 1 else d**p) * self.grid.dx)
        for (w, _, _), a in zip(self._tracking, acc):
            out += w * (a * scale)
        for w in self._bv:
            out += w * _row_sums(np.abs(np.diff(U0, axis=1)))
        return out


def _row_sums(a: np.ndarray) -> np.ndarray:
    # sequential left-to-right sum per row; np.sum's pairwise blocking depends on the batch shape
    return np.cumsum(a, axis=1)[:, -1] if a.shape[1] else np.zeros(a.shape[0])


def evaluate(spec: ObjectiveSpec, u_o: CellField, scheme: SchemeConfig, speed: SpeedLaw | None = None) -> float:
    return Objective(spec, u_o.grid, scheme, speed)(u_o)


def tracking_objective(ref: ReferenceSolution, grid: Grid1D, scheme: SchemeConfig, speed: SpeedLaw | None = None,
                       window: tuple[float, float] = (-1.0, 1.0)) -> Objective:
    """The distributed L1 tracking functional against ``ref`` alone."""
    spec = ObjectiveSpec([ObjectiveTerm("distributed_tracking", 1.0, window, ref)])
    return Objective(spec, grid, scheme, speed)
