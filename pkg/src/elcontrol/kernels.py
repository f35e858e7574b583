"""Look-ahead convolution kernels and their discrete, normalized counterparts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Two readings of H/dx that differ only by rounding must give the same tap count.
_CEIL_TOL = 1e-9


def _affine(x: np.ndarray) -> np.ndarray:
    return 2.0 * (x + 1.0)


def _quadratic(x: np.ndarray) -> np.ndarray:
    return 3.0 * (x + 1.0) ** 2


SHAPES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "affine": _affine,
    "quadratic": _quadratic,
}


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Kernel supported on [-1, 0], non-decreasing, vanishing at -1, unit mass.

    ``profile`` is evaluated only on [-1, 0]; it is zero elsewhere by construction.
    """

    shape: str = "affine"
    profile: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.profile is None:
            if self.shape not in SHAPES:
                raise KernelError(f"unknown kernel shape {self.shape!r}; known: {sorted(SHAPES)}")
            object.__setattr__(self, "profile", SHAPES[self.shape])
        self._validate()

    def _validate(self) -> None:
        xs = np.linspace(-1.0, 0.0, 10_001)
        ys = np.asarray(self.profile(xs), dtype=float)
        if np.any(ys < 0):
            raise KernelError(f"kernel {self.shape!r} takes negative values on [-1, 0]")
        if abs(ys[0]) > 1e-14:
            raise KernelError(f"kernel {self.shape!r} must vanish at -1, got {ys[0]!r}")
        if np.any(np.diff(ys) < -1e-14):
            raise KernelError(f"kernel {self.shape!r} is not non-decreasing on [-1, 0]")
        nodes, wts = np.polynomial.legendre.leggauss(64)
        mass = 0.5 * float(np.dot(wts, self.profile(0.5 * (nodes - 1.0))))
        if abs(mass - 1.0) > 1e-12:
            raise KernelError(f"kernel {self.shape!r} has mass {mass!r}, expected 1")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= -1.0) & (x <= 0.0)
        return np.where(inside, self.profile(np.clip(x, -1.0, 0.0)), 0.0)


def kernel_value(spec: KernelSpec, H: float, x):
    """Rescaled kernel ``eta(x / H) / H``; zero outside [-H, 0]."""
    if not H > 0:
        raise KernelError(f"kernel width H must be positive, got {H!r}")
    out = spec(np.asarray(x, dtype=float) / H) / H
    return float(out) if np.ndim(out) == 0 else out


def n_taps(H: float, dx: float) -> int:
    return max(1, math.ceil(H / dx - _CEIL_TOL))


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    H: float
    dx: float
    n_taps: int
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def discrete_weights(spec: KernelSpec, H: float, dx: float) -> DiscreteKernel:
    """Sample the rescaled kernel at -i*dx (i = 0 .. N_H - 1) and normalize.

    Weight ``i`` multiplies the value ``i`` cells downstream.
    """
    if not H > 0 or not dx > 0:
        raise KernelError(f"need H > 0 and dx > 0, got H={H!r}, dx={dx!r}")
    n = n_taps(H, dx)
    samples = np.asarray(kernel_value(spec, H, -dx * np.arange(n)), dtype=float).reshape(n)
    total = float(np.sum(samples))
    if not total > 0:
        raise KernelError(f"all kernel samples vanish for H={H!r}, dx={dx!r}")
    return DiscreteKernel(H, dx, n, samples / total)


def convolve_array(values: np.ndarray, weights: np.ndarray, n_out: int) -> np.ndarray:
    """``out[..., j] = sum_i weights[i] * values[..., j + i]`` for j < n_out.

    Accumulates tap by tap so the result does not depend on the batch shape.
    """
    n = len(weights)
    avail = values.shape[-1] - n_out
    if avail < n - 1:
        raise KernelError(f"convolution needs {n - 1} values beyond the output range, only {avail} available")
    out = weights[0] * values[..., :n_out]
    for i in range(1, n):
        out = out + weights[i] * values[..., i : i + n_out]
    return out


def convolve(ext, k: DiscreteKernel):
    """Convolve an :class:`~elcontrol.scheme.ExtendedField` back onto its own grid."""
    from .grid import CellField

    if ext.n_right < k.n_taps - 1:
        raise KernelError(f"convolution needs {k.n_taps - 1} right ghost cells, only {ext.n_right} available")
    vals = ext.values[ext.n_left :]
    return CellField(ext.grid, convolve_array(vals, k.weights, ext.grid.n_cells))
