"""Eulerian-Lagrangian time stepping for local and look-ahead nonlocal traffic models.

Every array routine here works on the last axis and accepts leading batch
axes; all arithmetic is elementwise, so a batched run produces exactly the
same bits as the corresponding single runs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .grid import CellField, Grid1D
from .kernels import DiscreteKernel, KernelSpec, convolve_array, discrete_weights, n_taps


class SchemeError(RuntimeError):
    def __init__(self, msg: str, step: int | None = None):
        super().__init__(msg if step is None else f"step {step}: {msg}")
        self.step = step


class CFLViolation(SchemeError):
    def __init__(self, j: int, h: float, step: int | None = None):
        super().__init__(f"CFL violation: non-positive cell width h[{j}] = {h!r}", step)
        self.j = j
        self.h = h


class CFLWarning(UserWarning):
    pass


def _greenshields(r):
    return 1.0 - r


def _quadratic_speed(r):
    return 1.0 - r * r


SPEED_LAWS: dict[str, Callable] = {
    "greenshields": _greenshields,
    "quadratic": _quadratic_speed,
}


@dataclass(frozen=True)
class SpeedLaw:
    name: str = "greenshields"
    fn: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.fn is None:
            if self.name not in SPEED_LAWS:
                raise ValueError(f"unknown speed law {self.name!r}; known: {sorted(SPEED_LAWS)}")
            object.__setattr__(self, "fn", SPEED_LAWS[self.name])
        r = np.linspace(0.0, 1.0, 1001)
        v = np.asarray(self.fn(r), dtype=float)
        if abs(v[-1]) > 1e-14 or np.any(np.diff(v) > 1e-14):
            raise ValueError(f"speed law {self.name!r} must be non-increasing with v(1) = 0")

    def __call__(self, r):
        return self.fn(r)

    @property
    def v_max(self) -> float:
        r = np.linspace(0.0, 1.0, 10_001)
        return float(np.max(np.abs(self.fn(r))))


@dataclass(frozen=True)
class SchemeConfig:
    dx: float
    dt: float
    T: float
    H: float | None = None
    kernel: KernelSpec = field(default_factory=KernelSpec)
    boundary: str = "constant"
    store_every: int = 1

    def __post_init__(self) -> None:
        if not (self.dx > 0 and self.dt > 0 and self.T >= 0):
            raise ValueError(f"need dx > 0, dt > 0, T >= 0; got dx={self.dx}, dt={self.dt}, T={self.T}")
        if self.H is not None and not self.H > 0:
            raise ValueError(f"kernel width H must be positive, got {self.H}")
        if self.boundary != "constant":
            raise ValueError(f"unsupported boundary policy {self.boundary!r}; only 'constant'")
        if self.store_every < 1:
            raise ValueError("store_every must be >= 1")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(f"T / dt = {ratio!r} is not an integer step count")

    @classmethod
    def from_cfl(cls, dx: float, T: float, speed: SpeedLaw | None = None, cfl_factor: float = 1.0, **kw) -> SchemeConfig:
        return cls(dx=dx, dt=compute_dt(dx, speed or SpeedLaw(), cfl_factor), T=T, **kw)

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)

    @property
    def is_nonlocal(self) -> bool:
        return self.H is not None

    def ghost_cells(self) -> tuple[int, int]:
        if self.H is None:
            return 1, 1
        return 1, n_taps(self.H, self.dx) + 1

    def discrete_kernel(self) -> DiscreteKernel | None:
        return None if self.H is None else discrete_weights(self.kernel, self.H, self.dx)


def compute_dt(dx: float, speed: SpeedLaw, cfl_factor: float = 1.0) -> float:
    """``dt = cfl_factor * dx / (8 v_max)``; ``cfl_factor = 1`` is the strict bound."""
    if not cfl_factor > 0:
        raise ValueError("cfl_factor must be positive")
    vmax = speed.v_max
    if vmax == 0:
        raise ValueError("speed law vanishes identically; dt is undefined")
    return cfl_factor * dx / (8.0 * vmax)


def fitted_dt(dx: float, T: float, ratio: float = 0.5) -> float:
    """Largest ``dt <= ratio * dx`` that divides ``T`` into whole steps."""
    if T == 0:
        return ratio * dx
    target = ratio * dx
    m = math.ceil(T / target - 1e-9)
    return T / m


@dataclass(frozen=True, eq=False)
class ExtendedField:
    grid: Grid1D
    values: np.ndarray
    n_left: int
    n_right: int


def extend_array(values: np.ndarray, n_left: int, n_right: int) -> np.ndarray:
    if n_left < 0 or n_right < 0:
        raise ValueError("ghost counts must be non-negative")
    pad = [(0, 0)] * (values.ndim - 1) + [(n_left, n_right)]
    return np.pad(values, pad, mode="edge")


def extend_boundary(f: CellField, n_left: int, n_right: int) -> ExtendedField:
    return ExtendedField(f.grid, extend_array(f.values, n_left, n_right), n_left, n_right)


def _el_update(U: np.ndarray, V: np.ndarray, dx: float, dt: float) -> np.ndarray:
    # U, V carry one ghost on each side: n + 2 entries, result has n.
    h = dx + dt * (V[..., 1:] - V[..., :-1])
    if not np.all(h > 0):
        flat = np.argwhere(~(h > 0))[0]
        raise CFLViolation(int(flat[-1]), float(h[tuple(flat)]))
    F = (U[..., 1:] + U[..., :-1]) * (V[..., 1:] + V[..., :-1]) / h
    return (U[..., :-2] + 2.0 * U[..., 1:-1] + U[..., 2:]) / 4.0 + (dt / 4.0) * (F[..., :-1] - F[..., 1:])


def local_step(U: np.ndarray, speed: SpeedLaw, dx: float, dt: float) -> np.ndarray:
    """One local step; ``U`` holds one ghost cell per side, the result only the interior."""
    U = np.asarray(U, dtype=float)
    return _el_update(U, speed(U), dx, dt)


def nonlocal_step(U: np.ndarray, k: DiscreteKernel, speed: SpeedLaw, dx: float, dt: float) -> np.ndarray:
    """One nonlocal step; ``U`` holds 1 left and ``k.n_taps + 1`` right ghost cells."""
    U = np.asarray(U, dtype=float)
    n = U.shape[-1] - 2 - k.n_taps
    if n < 1:
        raise SchemeError(f"extended state too short ({U.shape[-1]}) for {k.n_taps} kernel taps")
    V = speed(convolve_array(U, k.weights, n + 2))
    return _el_update(U[..., : n + 2], V, dx, dt)


def iterate(u0: np.ndarray, speed: SpeedLaw, config: SchemeConfig) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(m, U^m)`` for m = 0 .. M; ``u0`` may carry leading batch axes."""
    U = np.asarray(u0, dtype=float)
    nl, nr = config.ghost_cells()
    k = config.discrete_kernel()
    dx, dt = config.dx, config.dt
    bound = dx / (8.0 * dt)
    if config.n_steps and speed.v_max > bound:
        warnings.warn(
            f"v_max={speed.v_max:g} exceeds dx/(8 dt)={bound:.4g} (dx={dx:g}, dt={dt:g}); edge lengths are checked each step",
            CFLWarning,
            stacklevel=2,
        )
    yield 0, U
    for m in range(1, config.n_steps + 1):
        ext = extend_array(U, nl, nr)
        try:
            if k is None:
                U = local_step(ext, speed, dx, dt)
            else:
                U = nonlocal_step(ext, k, speed, dx, dt)
        except CFLViolation as exc:
            raise CFLViolation(exc.j, exc.h, step=m) from None
        yield m, U


@dataclass(frozen=True, eq=False)
class Trajectory:
    config: SchemeConfig
    grid: Grid1D
    steps: np.ndarray
    times: np.ndarray
    values: np.ndarray  # (n_stored, n_cells)
    u_min: float
    u_max: float

    @property
    def states(self) -> list[CellField]:
        return [CellField(self.grid, row) for row in self.values]

    @property
    def initial(self) -> CellField:
        return CellField(self.grid, self.values[0])

    @property
    def final(self) -> CellField:
        return CellField(self.grid, self.values[-1])

    @property
    def every_step(self) -> bool:
        return len(self.steps) == self.config.n_steps + 1


def run(u_o: CellField, speed: SpeedLaw, config: SchemeConfig) -> Trajectory:
    if not math.isclose(u_o.grid.dx, config.dx, rel_tol=1e-12):
        raise SchemeError(f"datum grid dx={u_o.grid.dx} differs from scheme dx={config.dx}")
    if np.any(u_o.values < 0.0) or np.any(u_o.values > 1.0):
        raise SchemeError("initial datum must take values in [0, 1]")
    M = config.n_steps
    steps, rows = [], []
    lo, hi = math.inf, -math.inf
    for m, U in iterate(u_o.values, speed, config):
        lo = min(lo, float(U.min()))
        hi = max(hi, float(U.max()))
        if m % config.store_every == 0 or m == M:
            steps.append(m)
            rows.append(U)
    steps = np.array(steps, dtype=int)
    values = np.array(rows)
    values.setflags(write=False)
    return Trajectory(config, u_o.grid, steps, steps * config.dt, values, lo, hi)
