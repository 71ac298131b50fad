"""Independent checks of the solver: brute-force optimisation and identities."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConvergenceError, RegimeError
from .fbode import SolveReport, TrajectoryPair, _adjoint_action
from .problem import ProblemSpec
from .regime import Regime

__all__ = [
    "TranscriptionResult",
    "GapReport",
    "GradientReport",
    "direct_transcribe",
    "transcription_cost",
    "optimality_gap_check",
    "gamma_gradient_check",
    "contraction_monitor",
]


@dataclass
class TranscriptionResult:
    grid: np.ndarray
    controls: np.ndarray  # (nodes, p), constant on each interval
    cost: float
    grad_norm: float
    iterations: int
    converged: bool


def _rk4_step(spec, y, Bu, h):
    f = lambda v: spec.drift(v) + Bu
    k1 = f(y)
    Y2 = y + 0.5 * h * k1
    k2 = f(Y2)
    Y3 = y + 0.5 * h * k2
    k3 = f(Y3)
    Y4 = y + h * k3
    k4 = f(Y4)
    return y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0, (y, Y2, Y3, Y4)


def _rollout(spec, x, u, h):
    K = u.shape[0]
    ys = np.empty((K + 1, spec.dim))
    stages = []
    ys[0] = x
    Bu = u @ spec.B.T
    for j in range(K):
        ys[j + 1], st = _rk4_step(spec, ys[j], Bu[j], h)
        stages.append(st)
    return ys, stages


def _weights(K, h):
    w = np.full(K + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def transcription_cost(spec: ProblemSpec, x, u: np.ndarray, h: float) -> float:
    """Cost of piecewise-constant controls: RK4 states, trapezoidal running cost."""
    ys, _ = _rollout(spec, np.asarray(x, dtype=float), u, h)
    return _cost(spec, ys, u, h)


def _cost(spec, ys, u, h):
    run = float(_weights(u.shape[0], h) @ spec.cost_running(ys))
    ctrl = 0.5 * h * float(np.einsum("ki,ij,kj->", u, spec.N, u))
    return run + ctrl + float(spec.cost_terminal(ys[-1]))


def _gradient(spec, ys, stages, u, h):
    """Discrete adjoint of the RK4 + trapezoid cost with respect to u."""
    K = u.shape[0]
    w = _weights(K, h)
    grad = np.empty_like(u)
    p = spec.terminal_grad(ys[-1]) + w[K] * spec.running_grad(ys[-1])
    Bt = spec.B.T
    drift = spec.drift
    for j in range(K - 1, -1, -1):
        Y1, Y2, Y3, Y4 = stages[j]
        c1 = c4 = h / 6.0 * p
        c2 = c3 = h / 3.0 * p
        ybar = p.copy()
        a4 = _adjoint_action(drift, Y4, c4)
        ybar += a4
        c3 = c3 + h * a4
        a3 = _adjoint_action(drift, Y3, c3)
        ybar += a3
        c2 = c2 + 0.5 * h * a3
        a2 = _adjoint_action(drift, Y2, c2)
        ybar += a2
        c1 = c1 + 0.5 * h * a2
        ybar += _adjoint_action(drift, Y1, c1)
        grad[j] = Bt @ (c1 + c2 + c3 + c4) + h * (spec.N @ u[j])
        p = ybar + w[j] * spec.running_grad(ys[j])
    return grad


def direct_transcribe(spec: ProblemSpec, x, t: float = 0.0, nodes: int = 64,
                      tol: float = 1e-8, *, max_iter: int = 5000, end: float | None = None,
                      raise_on_cap: bool = True) -> TranscriptionResult:
    """Brute-force optimal control over piecewise-constant controls.

    Steepest descent in the L2 metric (gradient divided by the interval
    length) with Armijo backtracking, started from the zero control.

    Raises
    ------
    ConvergenceError
        When the iteration cap is reached before the gradient norm is below
        ``tol`` (unless ``raise_on_cap`` is false).
    """
    if nodes < 16:
        raise ValueError("direct transcription needs at least 16 nodes")
    end = spec.horizon_T if end is None else end
    x = np.asarray(x, dtype=float).reshape(spec.dim)
    h = (end - t) / nodes
    grid = t + h * np.arange(nodes + 1)
    u = np.zeros((nodes, spec.ctrl_dim))
    ys, stages = _rollout(spec, x, u, h)
    J = _cost(spec, ys, u, h)
    step = 1.0
    it = 0
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        g = _gradient(spec, ys, stages, u, h) / h  # L2 Riesz representative
        gnorm = float(np.sqrt(h * np.sum(g * g)))
        if gnorm <= tol:
            break
        step = min(step * 2.0, 1e3)
        while True:
            u_try = u - step * g
            ys_try, st_try = _rollout(spec, x, u_try, h)
            J_try = _cost(spec, ys_try, u_try, h)
            if J_try <= J - 1e-4 * step * gnorm ** 2 or step < 1e-14:
                break
            step *= 0.5
        if step < 1e-14:
            break
        u, ys, stages, J = u_try, ys_try, st_try, J_try
    ok = gnorm <= tol
    res = TranscriptionResult(grid, u, J, gnorm, it, ok)
    if not ok and raise_on_cap:
        raise ConvergenceError(f"direct transcription stalled at gradient norm {gnorm:.3e}", res)
    return res


@dataclass
class GapReport:
    gaps: np.ndarray          # J(u + v) - J(u)
    bounds: np.ndarray        # 1/2 int (v, N v)
    slacks: np.ndarray        # gaps - bounds
    full_bounds: np.ndarray   # with the state terms (nan when alpha unavailable)
    base_cost: float

    @property
    def min_slack(self) -> float:
        return float(self.slacks.min()) if self.slacks.size else 0.0

    def passed(self, tol: float = 1e-6) -> bool:
        return bool(np.all(self.slacks >= -tol))

    def to_dict(self) -> dict:
        return {"base_cost": self.base_cost, "gaps": self.gaps.tolist(),
                "bounds": self.bounds.tolist(), "slacks": self.slacks.tolist(),
                "full_bounds": self.full_bounds.tolist(), "min_slack": self.min_slack}


def _controlled_path(spec, x, grid, u):
    """RK4 with the control linear between nodes; returns states at the nodes."""
    Bu = u @ spec.B.T
    y = np.empty((grid.shape[0], spec.dim))
    y[0] = x
    for j in range(grid.shape[0] - 1):
        h = grid[j + 1] - grid[j]
        b0, b1 = Bu[j], Bu[j + 1]
        bm = 0.5 * (b0 + b1)
        cur = y[j]
        k1 = spec.drift(cur) + b0
        k2 = spec.drift(cur + 0.5 * h * k1) + bm
        k3 = spec.drift(cur + 0.5 * h * k2) + bm
        k4 = spec.drift(cur + h * k3) + b1
        y[j + 1] = cur + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return y


def _path_cost(spec, grid, y, u):
    run = spec.cost_running(y) + 0.5 * np.einsum("ki,ij,kj->k", u, spec.N, u)
    return float(trapezoid(run, grid)) + float(spec.cost_terminal(y[-1]))


def optimality_gap_check(spec: ProblemSpec, traj: TrajectoryPair, perturbations) -> GapReport:
    """Check J(u + v) - J(u) >= 1/2 int (v, N v) for each control perturbation v.

    Both costs are recomputed on the trajectory grid with the same scheme.
    The full bound adds 1/2 int (nu - b alpha_s)|dy|^2 + nu_T/2 |dy(T)|^2.
    """
    grid = traj.grid
    x = traj.y[0]
    y_u = _controlled_path(spec, x, grid, traj.u)
    base = _path_cost(spec, grid, y_u, traj.u)
    try:
        reg = Regime(spec)
        alpha = np.array([reg.alpha(s) for s in grid])
    except RegimeError:
        alpha = None
    gaps, bounds, full = [], [], []
    for v in perturbations:
        v = np.broadcast_to(np.asarray(v, dtype=float).reshape(-1, spec.ctrl_dim)
                            if np.ndim(v) else np.full((1, spec.ctrl_dim), float(v)),
                            traj.u.shape)
        w = traj.u + v
        y_w = _controlled_path(spec, x, grid, w)
        gap = _path_cost(spec, grid, y_w, w) - base
        bound = 0.5 * float(trapezoid(np.einsum("ki,ij,kj->k", v, spec.N, v), grid))
        gaps.append(gap)
        bounds.append(bound)
        if alpha is not None:
            dy2 = np.sum((y_w - y_u) ** 2, axis=1)
            state = 0.5 * float(trapezoid((spec.nu - spec.b_const * alpha) * dy2, grid))
            full.append(bound + state + 0.5 * spec.nu_T * dy2[-1])
        else:
            full.append(np.nan)
    gaps, bounds = np.array(gaps), np.array(bounds)
    return GapReport(gaps, bounds, gaps - bounds, np.array(full), base)


@dataclass
class GradientReport:
    points: list
    gamma: np.ndarray
    fd: np.ndarray
    errors: np.ndarray       # max abs error per point, scaled by max(1, |Gamma|)
    tolerance: float

    @property
    def flags(self) -> np.ndarray:
        return self.errors > self.tolerance

    @property
    def passed(self) -> bool:
        return not bool(np.any(self.flags))

    def to_dict(self) -> dict:
        return {"errors": self.errors.tolist(), "passed": self.passed,
                "tolerance": self.tolerance}


def gamma_gradient_check(spec: ProblemSpec, field, points, *, value=None,
                         rel_step: float = 1e-4, tolerance: float = 1e-3) -> GradientReport:
    """Compare Gamma(x, t) with central differences of the value function in x.

    ``value(x, t)`` defaults to the cost of ``field.trajectory(x, t)``.
    """
    from .fbode import value_eval

    if value is None:
        value = getattr(field, "value", None) or (
            lambda xx, tt: value_eval(spec, field.trajectory(xx, tt)))
    gam, fds, errs, pts = [], [], [], []
    for x, t in points:
        x = np.asarray(x, dtype=float).reshape(spec.dim)
        g = np.asarray(field.evaluate(x, t), dtype=float)
        eps = rel_step * (1.0 + np.linalg.norm(x))
        fd = np.empty(spec.dim)
        for k in range(spec.dim):
            e = np.zeros(spec.dim)
            e[k] = eps
            fd[k] = (value(x + e, t) - value(x - e, t)) / (2 * eps)
        gam.append(g)
        fds.append(fd)
        pts.append((x, t))
        errs.append(float(np.max(np.abs(fd - g)) / max(1.0, float(np.linalg.norm(g)))))
    return GradientReport(pts, np.array(gam), np.array(fds), np.array(errs), tolerance)


def contraction_monitor(report: SolveReport, factor: float, *, slack: float = 1.1) -> str:
    """'pass' iff every observed ratio is at most slack * factor.

    Returns 'not applicable' for uncertified runs; one-iteration runs pass
    vacuously.
    """
    if not report.regime_certified:
        return "not applicable"
    return "pass" if all(r <= slack * factor for r in report.ratios) else "fail"
