"""Evaluable representations of the decoupling field Gamma(x, t).

Every field exposes ``evaluate(x, t)`` for a single time ``t`` and states
``x`` of shape ``(d,)`` or ``(B, d)``; the result has the same shape as ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DomainError

__all__ = [
    "TerminalGradient",
    "TrajectoryCache",
    "GridInterpolant",
    "PerturbedField",
    "default_grid_points",
]

_TIME_SLACK = 1e-12


class TerminalGradient:
    """Time-frozen terminal map: Gamma(x, t) = U(x) for every t."""

    def __init__(self, gradient: Callable[[np.ndarray], np.ndarray], time: float | None = None):
        self.gradient = gradient
        self.time = time

    def evaluate(self, x, t: float | None = None):
        return np.asarray(self.gradient(np.asarray(x, dtype=float)), dtype=float)


class TrajectoryCache:
    """Adjoint values stored along one trajectory, linear in time between nodes.

    The state argument is ignored: the cache is the restriction of a field to
    the states visited by its trajectory.
    """

    def __init__(self, grid: np.ndarray, z: np.ndarray):
        self.grid = np.asarray(grid, dtype=float)
        self.z = np.asarray(z, dtype=float)
        if self.z.shape[0] != self.grid.shape[0]:
            raise ValueError("grid and z lengths differ")

    def at_time(self, t: float) -> np.ndarray:
        g = self.grid
        if t < g[0] - _TIME_SLACK or t > g[-1] + _TIME_SLACK:
            raise DomainError(f"time {t} outside cached window [{g[0]}, {g[-1]}]")
        if g.shape[0] == 1:
            return self.z[0].copy()
        j = int(np.clip(np.searchsorted(g, t, side="right") - 1, 0, g.shape[0] - 2))
        w = (t - g[j]) / (g[j + 1] - g[j])
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * self.z[j] + w * self.z[j + 1]

    def evaluate(self, x, t: float):
        zt = self.at_time(t)
        return np.broadcast_to(zt, np.shape(x)).copy()


def default_grid_points(d: int) -> int:
    """Points per axis for a box interpolant in dimension d."""
    return {1: 801, 2: 81, 3: 21}.get(d, 0)


@dataclass
class GridInterpolant:
    """Multilinear interpolant of Gamma(., time) on the box [-radius, radius]^d."""

    time: float
    radius: float
    axes: tuple
    values: np.ndarray  # shape (n_1, ..., n_d, d)

    def __post_init__(self):
        self._interp = RegularGridInterpolator(self.axes, self.values, method="linear",
                                               bounds_error=False, fill_value=None)

    @classmethod
    def nodes(cls, d: int, radius: float, points: int | None = None):
        n = points or default_grid_points(d)
        if n < 2:
            raise DomainError(f"grid interpolant supports d <= 3, got d={d}")
        axes = tuple(np.linspace(-radius, radius, n) for _ in range(d))
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return axes, mesh.reshape(-1, d)

    @classmethod
    def from_samples(cls, time: float, radius: float, axes, flat_values: np.ndarray):
        shape = tuple(len(a) for a in axes) + (flat_values.shape[-1],)
        return cls(time, radius, tuple(axes), flat_values.reshape(shape))

    def evaluate(self, x, t: float | None = None):
        if t is not None and abs(t - self.time) > 1e-9 * max(1.0, abs(self.time)):
            raise DomainError(f"interpolant slice is at t={self.time}, asked for t={t}")
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > self.radius * (1.0 + 1e-12)):
            raise DomainError("state left the interpolation box")
        flat = x.reshape(-1, x.shape[-1])
        return self._interp(flat).reshape(x.shape)


class PerturbedField:
    """Field plus an additive linear perturbation eps * x (diagnostics only)."""

    def __init__(self, base, eps: float):
        self.base = base
        self.eps = eps

    def evaluate(self, x, t):
        return self.base.evaluate(x, t) + self.eps * np.asarray(x, dtype=float)

    def trajectory(self, x, t):
        return self.base.trajectory(x, t)

    def __getattr__(self, name):
        return getattr(self.base, name)
