"""Forward-backward optimality system: fixed-point solver and layered extension.

The state runs forward, ``dy/ds = A(y) - G z``, from ``y(t) = x``; the adjoint
runs backward, ``-dz/ds = DA(y)^T z + DF(y)``, from ``z(T') = U(y(T'))``
where ``U`` is the terminal map of the interval (the terminal-cost gradient
on the last interval, the field of the next layer otherwise).

The fixed-point map acts on adjoint paths: given the current path, integrate
the state forward with RK4, then rebuild the adjoint by trapezoidal
quadrature of the backward equation along the new state path.
"""
from __future__ import annotations

import threading
import time as _time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from . import kernels
from .errors import BudgetError, ConvergenceError, DomainError, RegimeError
from .fields import GridInterpolant, TerminalGradient, TrajectoryCache, default_grid_points
from .problem import LinearDrift, ProblemSpec, SaturatingDrift
from .regime import HorizonPlan, LocalHorizon, Regime

__all__ = [
    "TrajectoryPair",
    "SolveReport",
    "SensitivityPath",
    "LayeredComposite",
    "time_grid",
    "forward_integrate",
    "lambda_map",
    "picard_local",
    "global_solve",
    "decoupling_eval",
    "sensitivity_solve",
    "value_eval",
    "bellman_residual",
]

DEFAULT_STEPS = 1000
MIN_STEPS = 200
DEFAULT_TOL = 1e-8
MAX_ITER = 200
EVAL_BUDGET = 1_000_000


@dataclass
class TrajectoryPair:
    """State, adjoint and control on an increasing time grid."""

    grid: np.ndarray
    y: np.ndarray
    z: np.ndarray
    u: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.y[0]

    @property
    def start(self) -> float:
        return float(self.grid[0])

    @property
    def end(self) -> float:
        return float(self.grid[-1])

    def state_at(self, t: float) -> np.ndarray:
        return TrajectoryCache(self.grid, self.y).at_time(t)

    def adjoint_at(self, t: float) -> np.ndarray:
        return TrajectoryCache(self.grid, self.z).at_time(t)


@dataclass
class SolveReport:
    iterations: int
    ratios: tuple
    final_residual: float
    regime_certified: bool
    converged: bool = True
    wall_time: float = 0.0
    layers: tuple = field(default_factory=tuple)

    def to_dict(self, include_time: bool = False) -> dict:
        out = {
            "iterations": self.iterations,
            "ratios": list(self.ratios),
            "final_residual": self.final_residual,
            "regime_certified": self.regime_certified,
            "converged": self.converged,
            "layers": [r.to_dict(include_time) for r in self.layers],
        }
        if include_time:
            out["wall_time"] = self.wall_time
        return out


def time_grid(start: float, end: float, steps_per_unit: int = DEFAULT_STEPS) -> np.ndarray:
    """Increasing grid on [start, end] anchored at ``end``.

    Nodes sit at ``end - j/steps_per_unit``; the leftover piece becomes a
    shorter first step, so grids of nested intervals share their nodes.
    Short intervals get a uniform 4-node grid.
    """
    if steps_per_unit < MIN_STEPS:
        raise ValueError(f"need at least {MIN_STEPS} steps per unit time")
    length = end - start
    if length < 0:
        raise DomainError("interval end precedes its start")
    if length == 0:
        return np.array([float(end)])
    dt = 1.0 / steps_per_unit
    full = int(np.floor(length / dt + 1e-9))
    if full < 3:
        return np.linspace(start, end, 4)
    nodes = end - dt * np.arange(full, -1, -1, dtype=float)
    if nodes[0] - start > 1e-12 * max(1.0, length):
        nodes = np.concatenate(([start], nodes))
    else:
        nodes[0] = start
    return nodes


def _adjoint_action(drift, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """DA(y)^T z, broadcast over leading axes."""
    if isinstance(drift, LinearDrift):
        return z @ drift.matrix
    if isinstance(drift, SaturatingDrift):
        r = np.sqrt(np.einsum("...i,...i->...", y, y))[..., None]
        yz = np.einsum("...i,...i->...", y, z)[..., None]
        with np.errstate(invalid="ignore", divide="ignore"):
            radial = np.where(r > 0, yz * y / (r * (1.0 + r) ** 2), 0.0)
        return drift.scale * (z / (1.0 + r) - radial)
    jac = drift.jacobian(y)
    return np.einsum("...ki,...k->...i", jac, z)


def _backward_quadrature(spec: ProblemSpec, y: np.ndarray, lam: np.ndarray, zT: np.ndarray,
                         dt: np.ndarray) -> np.ndarray:
    """Adjoint path z(s) = zT + int_s^T' DA(y)^T lam + DF(y), trapezoidal."""
    g = _adjoint_action(spec.drift, y, lam) + spec.running_grad(y)
    incr = 0.5 * dt.reshape((-1,) + (1,) * (g.ndim - 1)) * (g[:-1] + g[1:])
    z = np.empty_like(g)
    z[-1] = zT
    if incr.shape[0]:
        z[:-1] = zT + np.cumsum(incr[::-1], axis=0)[::-1]
    return z


def _forward(spec: ProblemSpec, x: np.ndarray, z: np.ndarray, dt: np.ndarray, backend=None):
    gz = z @ spec.G
    y = kernels.forward_sweep(spec.drift, x, gz, dt, backend=backend)
    if y is None:
        raise DomainError("nonfinite state in forward integration")
    return y


def _pack(spec: ProblemSpec, grid, y, z) -> TrajectoryPair:
    return TrajectoryPair(np.asarray(grid, dtype=float), y, z, spec.control(z))


def _picard_batch(spec: ProblemSpec, X: np.ndarray, grid: np.ndarray, terminal: Callable,
                  tol: float, max_iter: int, backend=None):
    """Fixed-point iteration for a batch of initial states on one grid.

    Returns y, z of shape (K+1, B, d), per-iteration sup differences
    (scaled by 1 + |x|), and the convergence flag.
    """
    dt = np.diff(grid)
    scale = 1.0 + np.linalg.norm(X, axis=-1)
    z = np.broadcast_to(terminal(X), (grid.shape[0],) + X.shape).copy()
    diffs = []
    converged = False
    for _ in range(max_iter):
        y = _forward(spec, X, z, dt, backend)
        zT = terminal(y[-1])
        z_new = _backward_quadrature(spec, y, z, zT, dt)
        d = np.max(np.abs(z_new - z), axis=(0, 2)) / scale
        z = z_new
        diffs.append(float(d.max()))
        if np.all(d <= tol):
            converged = True
            break
    y = _forward(spec, X, z, dt, backend)
    return y, z, diffs, converged


def _ratios(diffs):
    return tuple(diffs[k] / diffs[k - 1] for k in range(1, len(diffs)) if diffs[k - 1] > 0)


def picard_local(spec: ProblemSpec, x, t: float, terminal_grad: Callable | None = None, *,
                 end: float | None = None, horizon: LocalHorizon | None = None,
                 tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER,
                 steps_per_unit: int = DEFAULT_STEPS, backend: str | None = None,
                 certify: bool = True):
    """Solve the optimality system on [t, end] by fixed-point iteration.

    Parameters
    ----------
    spec : ProblemSpec
    x : array_like, shape (d,)
        Initial state at time ``t``.
    terminal_grad : callable, optional
        Terminal map at ``end`` (vectorised over rows); defaults to the
        terminal-cost gradient.
    end : float, optional
        Right end of the interval, default the horizon.
    horizon : LocalHorizon, optional
        Admissible interval for the terminal map's Lipschitz constant; when
        omitted it is computed from the regime for the terminal cost.
    tol : float
        Stop when the sup-node adjoint update is at most ``tol * (1 + |x|)``.

    Returns
    -------
    (TrajectoryPair, SolveReport)

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations do not reach ``tol``.
    """
    t0 = _time.perf_counter()
    x = np.asarray(x, dtype=float).reshape(spec.dim)
    end = spec.horizon_T if end is None else float(end)
    terminal = terminal_grad or spec.terminal_grad
    if horizon is None and certify:
        try:
            horizon = Regime(spec).admissible_h(spec.M_T)
        except RegimeError:
            horizon = None
    certified = horizon is not None and (end - t) <= horizon.h_max + 1e-12
    grid = time_grid(t, end, steps_per_unit)
    if grid.shape[0] == 1:
        z = np.asarray(terminal(x[None, :]), dtype=float)
        pair = _pack(spec, grid, x[None, :].copy(), z)
        return pair, SolveReport(0, (), 0.0, certified, True, _time.perf_counter() - t0)
    y, z, diffs, ok = _picard_batch(spec, x[None, :], grid, terminal, tol, max_iter, backend)
    report = SolveReport(len(diffs), _ratios(diffs), diffs[-1], certified, ok,
                         _time.perf_counter() - t0)
    pair = _pack(spec, grid, y[:, 0, :], z[:, 0, :])
    if not ok:
        raise ConvergenceError(f"fixed-point iteration not converged after {max_iter} "
                               f"iterations (last update {diffs[-1]:.3e})", report)
    return pair, report


def forward_integrate(spec: ProblemSpec, field, x, interval: tuple[float, float], *,
                      steps_per_unit: int = DEFAULT_STEPS):
    """RK4 path of dy/ds = A(y) - G field(y, s), field evaluated at the stage states.

    Returns ``(grid, y)`` with ``y`` of shape (K+1, d).
    """
    x = np.asarray(x, dtype=float).reshape(spec.dim)
    grid = time_grid(interval[0], interval[1], steps_per_unit)
    G = spec.G
    rhs = lambda yy, ss: spec.drift(yy) - field.evaluate(yy, ss) @ G
    y = np.empty((grid.shape[0], spec.dim))
    y[0] = x
    for j in range(grid.shape[0] - 1):
        s, h = grid[j], grid[j + 1] - grid[j]
        cur = y[j]
        k1 = rhs(cur, s)
        k2 = rhs(cur + 0.5 * h * k1, s + 0.5 * h)
        k3 = rhs(cur + 0.5 * h * k2, s + 0.5 * h)
        k4 = rhs(cur + h * k3, grid[j + 1])
        y[j + 1] = cur + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if not np.all(np.isfinite(y[j + 1])):
            raise DomainError("nonfinite state in forward integration")
    return grid, y


def lambda_map(spec: ProblemSpec, field, x, t: float, terminal_grad: Callable | None = None, *,
               end: float | None = None, steps_per_unit: int = DEFAULT_STEPS):
    """One application of the fixed-point map to a field.

    Returns ``(value, pair)`` where ``value`` is the new adjoint at (x, t)
    and ``pair`` carries the state path and the full adjoint path.
    """
    end = spec.horizon_T if end is None else float(end)
    terminal = terminal_grad or spec.terminal_grad
    grid, y = forward_integrate(spec, field, x, (t, end), steps_per_unit=steps_per_unit)
    lam = np.stack([field.evaluate(y[j], grid[j]) for j in range(grid.shape[0])])
    zT = np.asarray(terminal(y[-1]), dtype=float)
    z = _backward_quadrature(spec, y, lam, zT, np.diff(grid))
    return z[0].copy(), _pack(spec, grid, y, z)


class LayeredComposite:
    """Decoupling field on [0, T] built layer by layer.

    Layer ``j`` covers ``[t_{j+1}, t_j]`` (``t_0 = T``).  Its terminal map is
    the field at ``t_j``: the terminal-cost gradient for ``j = 0`` and
    otherwise either the layer ``j-1`` field evaluated recursively (memoised)
    or a grid interpolant fitted at ``t_j``.
    """

    def __init__(self, spec: ProblemSpec, plan: HorizonPlan, *, strategy: str = "recursive",
                 tol: float = DEFAULT_TOL, steps_per_unit: int = DEFAULT_STEPS,
                 max_iter: int = MAX_ITER, box_radius: float | None = None,
                 grid_points: int | None = None, budget: int = EVAL_BUDGET,
                 backend: str | None = None):
        if strategy not in ("recursive", "interpolated"):
            raise ValueError(f"unknown strategy {strategy!r}")
        if strategy == "interpolated" and spec.dim > 3:
            raise DomainError("interpolated strategy supports d <= 3")
        self.spec = spec
        self.plan = plan
        self.strategy = strategy
        self.tol = tol
        self.steps_per_unit = steps_per_unit
        self.max_iter = max_iter
        self.box_radius = box_radius
        self.grid_points = grid_points or default_grid_points(spec.dim)
        self.budget = budget
        self.backend = backend
        self.evaluations = 0
        self._memo: dict = {}
        self._lock = threading.Lock()
        self._slices: dict[int, GridInterpolant] = {}

    def layer_tol(self, j: int) -> float:
        """Stopping tolerance on layer j.

        Inner layers are solved tighter than the layers that use them as
        terminal data, otherwise their residual error becomes a floor for
        the outer iteration.
        """
        depth = self.plan.n_layers - 1 - j
        return max(self.tol * 0.1 ** depth, 5e-14)

    # terminal maps ------------------------------------------------------
    def boundary_map(self, j: int) -> Callable:
        """Terminal map of layer j (acts on rows of states at time t_j)."""
        if j == 0:
            return self.spec.terminal_grad
        t_j = self.plan.breakpoints[j]
        if self.strategy == "recursive":
            return lambda Y: self._evaluate_rows(np.atleast_2d(Y), t_j).reshape(np.shape(Y))
        interp = self._slice(j)
        return lambda Y: interp.evaluate(Y)

    def _slice(self, j: int) -> GridInterpolant:
        if j in self._slices:
            return self._slices[j]
        if self.box_radius is None:
            raise DomainError("interpolated strategy needs a box radius")
        start, end = self.plan.layers[j - 1]
        axes, nodes = GridInterpolant.nodes(self.spec.dim, self.box_radius, self.grid_points)
        grid = time_grid(start, end, self.steps_per_unit)
        terminal = self.boundary_map(j - 1)
        vals = np.empty_like(nodes)
        for lo in range(0, nodes.shape[0], 512):
            chunk = nodes[lo:lo + 512]
            _, z, diffs, ok = _picard_batch(self.spec, chunk, grid, terminal,
                                            self.layer_tol(j - 1), self.max_iter, self.backend)
            if not ok:
                raise ConvergenceError("grid fit did not converge", None)
            vals[lo:lo + 512] = z[0]
        interp = GridInterpolant.from_samples(start, self.box_radius, axes, vals)
        self._slices[j] = interp
        return interp

    # evaluation -------------------------------------------------------------
    def _key(self, row: np.ndarray, t: float, j: int):
        q = 1e-3 * self.layer_tol(j) * (1.0 + float(np.linalg.norm(row)))
        return (round(t / 1e-12),) + tuple(int(v) for v in np.round(row / q))

    def _evaluate_rows(self, X: np.ndarray, t: float) -> np.ndarray:
        out = np.empty_like(X, dtype=float)
        missing, keys = [], []
        j = self.plan.layer_of(t)
        for i, row in enumerate(X):
            key = self._key(row, t, j)
            hit = self._memo.get(key)
            if hit is None:
                missing.append(i)
                keys.append(key)
            else:
                out[i] = hit
        if missing:
            with self._lock:
                self.evaluations += len(missing)
                if self.evaluations > self.budget:
                    raise BudgetError(f"field evaluation budget {self.budget} exceeded")
            vals = self._solve_rows(X[missing], t)
            with self._lock:
                for key, i, v in zip(keys, missing, vals):
                    self._memo.setdefault(key, v.copy())
                    out[i] = v
        return out

    def _solve_rows(self, X: np.ndarray, t: float) -> np.ndarray:
        j = self.plan.layer_of(t)
        if j < 0:
            return self.spec.terminal_grad(X)
        grid = time_grid(t, self.plan.breakpoints[j], self.steps_per_unit)
        if grid.shape[0] == 1:
            return self.boundary_map(j)(X)
        _, z, diffs, ok = _picard_batch(self.spec, X, grid, self.boundary_map(j),
                                        self.layer_tol(j), self.max_iter, self.backend)
        if not ok:
            raise ConvergenceError("inner fixed-point solve did not converge", None)
        return z[0]

    def evaluate(self, x, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if t < -1e-14 or t > self.spec.horizon_T + 1e-14:
            raise DomainError(f"time {t} outside [0, {self.spec.horizon_T}]")
        if t >= self.spec.horizon_T:
            return np.asarray(self.spec.terminal_grad(x), dtype=float)
        rows = np.atleast_2d(x)
        return self._solve_rows(rows, t).reshape(x.shape)

    def trajectory(self, x, t: float = 0.0, *, report: bool = False):
        """Stitched optimal trajectory from (x, t) to T."""
        t0 = _time.perf_counter()
        spec, plan = self.spec, self.plan
        x = np.asarray(x, dtype=float).reshape(spec.dim)
        if t >= spec.horizon_T:
            pair = _pack(spec, np.array([spec.horizon_T]), x[None, :].copy(),
                         np.asarray(spec.terminal_grad(x[None, :]), dtype=float))
            rep = SolveReport(0, (), 0.0, True, True, _time.perf_counter() - t0)
            return (pair, rep) if report else pair
        j = plan.layer_of(t)
        pieces, reports, s, cur = [], [], t, x
        while j >= 0:
            end = plan.breakpoints[j]
            grid = time_grid(s, end, self.steps_per_unit)
            if grid.shape[0] > 1:
                y, z, diffs, ok = _picard_batch(spec, cur[None, :], grid, self.boundary_map(j),
                                                self.layer_tol(j), self.max_iter, self.backend)
                rep = SolveReport(len(diffs), _ratios(diffs), diffs[-1], True, ok)
                if not ok:
                    raise ConvergenceError("layer fixed-point solve did not converge", rep)
                pieces.append((grid, y[:, 0, :], z[:, 0, :]))
                reports.append(rep)
                cur = y[-1, 0, :]
            s, j = end, j - 1
        grid = np.concatenate([p[0][:-1] for p in pieces[:-1]] + [pieces[-1][0]])
        y = np.concatenate([p[1][:-1] for p in pieces[:-1]] + [pieces[-1][1]])
        z = np.concatenate([p[2][:-1] for p in pieces[:-1]] + [pieces[-1][2]])
        pair = _pack(spec, grid, y, z)
        if not report:
            return pair
        rep = SolveReport(sum(r.iterations for r in reports), reports[0].ratios,
                          max(r.final_residual for r in reports), True,
                          all(r.converged for r in reports), _time.perf_counter() - t0,
                          tuple(reports))
        return pair, rep


def _default_box(spec: ProblemSpec, x) -> float:
    xmax = float(np.max(np.abs(x))) if np.size(x) else 0.0
    return max(1.0, 2.0 * xmax) * float(np.exp(spec.gamma * spec.horizon_T))


def global_solve(spec: ProblemSpec, x, strategy: str = "recursive", tol: float = DEFAULT_TOL, *,
                 t: float = 0.0, plan: HorizonPlan | None = None,
                 steps_per_unit: int = DEFAULT_STEPS, box_radius: float | None = None,
                 backend: str | None = None):
    """Optimal trajectory on [t, T] via the layered fixed-point construction.

    Returns
    -------
    (TrajectoryPair, LayeredComposite, SolveReport)

    Raises
    ------
    RegimeError
        If the a priori estimates needed for the layer plan fail.
    """
    if plan is None:
        plan = Regime(spec).layer_plan()
    if box_radius is None and strategy == "interpolated":
        box_radius = _default_box(spec, x)
    fld = LayeredComposite(spec, plan, strategy=strategy, tol=tol,
                           steps_per_unit=steps_per_unit, box_radius=box_radius,
                           backend=backend)
    pair, rep = fld.trajectory(x, t, report=True)
    return pair, fld, rep


def decoupling_eval(field, x, t: float) -> np.ndarray:
    """Gamma(x, t) from any field representation."""
    return field.evaluate(np.asarray(x, dtype=float), t)


@dataclass
class SensitivityPath:
    """Jacobians along a trajectory: P(s) = D_x Gamma(y(s), s), Y(s) = D_x y(s)."""

    grid: np.ndarray
    P: np.ndarray
    Y: np.ndarray

    @property
    def Z(self) -> np.ndarray:
        return self.P @ self.Y

    @property
    def jacobian(self) -> np.ndarray:
        """D_x Gamma(x, t) at the start of the trajectory."""
        return self.P[0]


def sensitivity_solve(spec: ProblemSpec, traj: TrajectoryPair) -> SensitivityPath:
    """Linearised optimality system along a converged trajectory.

    Writing the variation of the adjoint as Z = P Y, P solves the matrix
    Riccati equation

        -P' = P Abar + Abar^T P - P G P + C,   P(T) = D^2 F_T(y(T)),

    with Abar = DA(y(s)) and C = D^2 F(y(s)) + D^2_x (A(y), z(s)).  P is
    integrated backward with RK4 (coefficients linear between nodes), then
    Y' = (Abar - G P) Y, Y(t) = I, forward.
    """
    grid, y, z = traj.grid, traj.y, traj.z
    d = spec.dim
    if grid.shape[0] == 1:
        P0 = np.asarray(spec.terminal_hessian(y[-1]), dtype=float)
        return SensitivityPath(grid, P0[None], np.eye(d)[None])
    Abar = np.asarray(spec.drift_jacobian(y), dtype=float)
    C = np.asarray(spec.running_hessian(y), dtype=float) + np.asarray(
        spec.drift_second_action(y, z), dtype=float)
    G = spec.G

    def rhs(P, A_, C_):
        # dP/ds
        return -(P @ A_ + A_.T @ P - P @ G @ P + C_)

    K = grid.shape[0] - 1
    P = np.empty((K + 1, d, d))
    P[K] = spec.terminal_hessian(y[-1])
    for j in range(K, 0, -1):
        h = grid[j - 1] - grid[j]  # negative step
        Am, Cm = 0.5 * (Abar[j] + Abar[j - 1]), 0.5 * (C[j] + C[j - 1])
        cur = P[j]
        k1 = rhs(cur, Abar[j], C[j])
        k2 = rhs(cur + 0.5 * h * k1, Am, Cm)
        k3 = rhs(cur + 0.5 * h * k2, Am, Cm)
        k4 = rhs(cur + h * k3, Abar[j - 1], C[j - 1])
        nxt = cur + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        P[j - 1] = 0.5 * (nxt + nxt.T)
        if not np.all(np.isfinite(P[j - 1])):
            raise DomainError("nonfinite sensitivity propagation")
    Y = np.empty_like(P)
    Y[0] = np.eye(d)
    for j in range(K):
        h = grid[j + 1] - grid[j]
        f = lambda Yc, A_, P_: (A_ - G @ P_) @ Yc
        Am, Pm = 0.5 * (Abar[j] + Abar[j + 1]), 0.5 * (P[j] + P[j + 1])
        cur = Y[j]
        k1 = f(cur, Abar[j], P[j])
        k2 = f(cur + 0.5 * h * k1, Am, Pm)
        k3 = f(cur + 0.5 * h * k2, Am, Pm)
        k4 = f(cur + h * k3, Abar[j + 1], P[j + 1])
        Y[j + 1] = cur + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return SensitivityPath(grid, P, Y)


def value_eval(spec: ProblemSpec, traj: TrajectoryPair) -> float:
    """Cost of the trajectory: int F(y) + 1/2 (G z, z) ds + F_T(y(T)), trapezoidal."""
    run = spec.cost_running(traj.y) + 0.5 * np.einsum("ki,ij,kj->k", traj.z, spec.G, traj.z)
    total = float(trapezoid(run, traj.grid)) if traj.grid.shape[0] > 1 else 0.0
    return total + float(spec.cost_terminal(traj.y[-1]))


def _field_value(spec, field, x, t):
    fn = getattr(field, "value", None)
    if fn is not None:
        return float(fn(x, t))
    return value_eval(spec, field.trajectory(x, t))


def bellman_residual(spec: ProblemSpec, field, x, t: float, *, delta: float = 1e-4) -> float:
    """|-V_t - (D_x V, A(x)) + 1/2 (D_x V, G D_x V) - F(x)| with D_x V = Gamma(x, t)."""
    x = np.asarray(x, dtype=float).reshape(spec.dim)
    if t - delta < 0 or t + delta > spec.horizon_T:
        raise DomainError("time stencil does not fit inside [0, T]")
    vp = _field_value(spec, field, x, t + delta)
    vm = _field_value(spec, field, x, t - delta)
    dVdt = (vp - vm) / (2.0 * delta)
    grad = np.asarray(field.evaluate(x, t), dtype=float)
    res = -dVdt - grad @ spec.drift(x) + 0.5 * grad @ spec.G @ grad - float(spec.cost_running(x))
    return abs(float(res))
