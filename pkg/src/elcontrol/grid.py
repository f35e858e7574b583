"""Uniform 1-D grids, piecewise-constant fields and the measurement toolbox."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

# Gauss-Legendre 2-point nodes on [-1, 1]; exact for cubics.
_GL_NODE = 1.0 / math.sqrt(3.0)
_ALIGN_TOL = 1e-9


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    dx: float
    n_cells: int

    def __post_init__(self) -> None:
        if not (self.dx > 0 and self.n_cells >= 1):
            raise GridError(f"invalid grid: dx={self.dx!r}, n_cells={self.n_cells!r}")
        span = self.x_max - self.x_min
        if abs(span - self.n_cells * self.dx) > 1e-12 * max(1.0, abs(self.x_max)):
            raise GridError(
                f"inconsistent grid: x_max - x_min = {span!r} but n_cells*dx = {self.n_cells * self.dx!r}"
            )

    @property
    def midpoints(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.dx

    def cell_index(self, x: float) -> int:
        """Index of the cell containing ``x`` (right edge belongs to the left cell at x_max)."""
        if x < self.x_min - 1e-12 or x > self.x_max + 1e-12:
            raise GridError(f"x={x!r} outside grid [{self.x_min}, {self.x_max}]")
        j = int(math.floor((x - self.x_min) / self.dx))
        return min(max(j, 0), self.n_cells - 1)

    def window_slice(self, window: tuple[float, float]) -> slice:
        """Cells contained in a cell-aligned ``window``."""
        lo, hi = window
        a = (lo - self.x_min) / self.dx
        b = (hi - self.x_min) / self.dx
        ia, ib = round(a), round(b)
        if abs(a - ia) > _ALIGN_TOL or abs(b - ib) > _ALIGN_TOL:
            raise GridError(f"window {window} is not aligned to cell edges of {self}")
        if ia < 0 or ib > self.n_cells or ia >= ib:
            raise GridError(f"window {window} outside grid extent [{self.x_min}, {self.x_max}]")
        return slice(ia, ib)

    def midpoint_mask(self, window: tuple[float, float]) -> np.ndarray:
        lo, hi = window
        x = self.midpoints
        return (x >= lo - 1e-12) & (x <= hi + 1e-12)


def make_grid(x_min: float, x_max: float, dx: float) -> Grid1D:
    if not x_max > x_min:
        raise GridError(f"x_max={x_max!r} must exceed x_min={x_min!r}")
    if not dx > 0:
        raise GridError(f"dx={dx!r} must be positive")
    ratio = (x_max - x_min) / dx
    n = round(ratio)
    if n < 1 or abs(ratio - n) > 1e-9:
        raise GridError(
            f"(x_max - x_min) = {x_max - x_min!r} is not an integer multiple of dx = {dx!r} "
            f"(ratio {ratio!r})"
        )
    # re-derive x_max so the invariant holds to rounding
    return Grid1D(float(x_min), float(x_min + n * dx), float(dx), int(n))


def grid_with_cells(x_min: float, x_max: float, n_cells: int) -> Grid1D:
    return Grid1D(float(x_min), float(x_max), (x_max - x_min) / n_cells, int(n_cells))


@dataclass(frozen=True, eq=False)
class CellField:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n_cells,):
            raise GridError(f"expected {self.grid.n_cells} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise GridError(f"non-finite value in cell {bad}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CellField):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def __len__(self) -> int:
        return self.grid.n_cells

    @property
    def x(self) -> np.ndarray:
        return self.grid.midpoints

    def with_values(self, values: np.ndarray) -> CellField:
        return CellField(self.grid, values)


@dataclass(frozen=True)
class AdmissibleSpec:
    box_lo: float = 0.0
    box_hi: float = 1.0
    tv_bound: float = math.inf
    support: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.box_lo > self.box_hi:
            raise ValueError(f"box_lo={self.box_lo} > box_hi={self.box_hi}")
        if not self.tv_bound > 0:
            raise ValueError("tv_bound must be positive")


class AdmissibleProjection(NamedTuple):
    field: CellField
    tv: float
    within_tv_bound: bool


def project_function(f: Callable[[np.ndarray], np.ndarray], grid: Grid1D) -> CellField:
    """Cell averages of ``f`` by 2-point Gauss-Legendre quadrature per cell.

    ``f`` must accept a numpy array of positions.
    """
    xm = grid.midpoints
    off = 0.5 * grid.dx * _GL_NODE
    left = np.asarray(f(xm - off), dtype=float) * np.ones_like(xm)
    right = np.asarray(f(xm + off), dtype=float) * np.ones_like(xm)
    avg = 0.5 * (left + right)
    return CellField(grid, avg)


def _check_same_grid(a: CellField, b: CellField) -> None:
    if a.grid != b.grid:
        raise GridError(f"grid mismatch: {a.grid} vs {b.grid}")


def l1_distance(a: CellField, b: CellField, window: tuple[float, float] | None = None) -> float:
    _check_same_grid(a, b)
    sl = slice(None) if window is None else a.grid.window_slice(window)
    return float(np.sum(np.abs(a.values[sl] - b.values[sl])) * a.grid.dx)


def l1_norm(a: CellField, window: tuple[float, float] | None = None) -> float:
    sl = slice(None) if window is None else a.grid.window_slice(window)
    return float(np.sum(np.abs(a.values[sl])) * a.grid.dx)


def l1_distance_across_grids(a: CellField, b: CellField, window: tuple[float, float]) -> float:
    """Exact L1 distance of two piecewise-constant fields living on different grids.

    The window need not be aligned with either grid.
    """
    lo, hi = window
    for g in (a.grid, b.grid):
        if lo < g.x_min - 1e-12 or hi > g.x_max + 1e-12:
            raise GridError(f"window {window} outside grid extent [{g.x_min}, {g.x_max}]")
    pts = np.concatenate([a.grid.edges, b.grid.edges, [lo, hi]])
    pts = np.unique(np.clip(pts, lo, hi))
    mids = 0.5 * (pts[:-1] + pts[1:])
    widths = np.diff(pts)
    ia = np.clip(np.floor((mids - a.grid.x_min) / a.grid.dx).astype(int), 0, a.grid.n_cells - 1)
    ib = np.clip(np.floor((mids - b.grid.x_min) / b.grid.dx).astype(int), 0, b.grid.n_cells - 1)
    return float(np.sum(np.abs(a.values[ia] - b.values[ib]) * widths))


def total_variation(f: CellField) -> float:
    return float(np.sum(np.abs(np.diff(f.values))))


def lip_minus_discrete(f: CellField) -> float:
    """Largest downward slope between adjacent cells; negative for strictly increasing data."""
    if f.grid.n_cells < 2:
        raise GridError("Lip^- needs at least two cells")
    return float(np.max(-np.diff(f.values) / f.grid.dx))


def project_admissible(f: CellField, spec: AdmissibleSpec) -> AdmissibleProjection:
    """Clip to the box and blank cells whose midpoint is outside the support.

    The TV bound is only checked, never enforced.
    """
    vals = np.clip(f.values, spec.box_lo, spec.box_hi)
    if spec.support is not None:
        k_lo, k_hi = spec.support
        g = f.grid
        if k_lo < g.x_min - 1e-12 or k_hi > g.x_max + 1e-12 or k_lo > k_hi:
            raise GridError(f"support {spec.support} not contained in grid extent")
        vals = np.where(g.midpoint_mask(spec.support), vals, spec.box_lo)
    out = CellField(f.grid, vals)
    tv = total_variation(out)
    return AdmissibleProjection(out, tv, tv <= spec.tv_bound)
