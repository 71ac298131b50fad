"""Linear-quadratic special case: Riccati solutions used as ground truth.

For A(x) = A x and quadratic costs with Hessians M and M_T, the decoupling
field is Gamma(x, s) = P(s) x where

    -dP/ds = P A + A^T P - P G P + M,    P(T) = M_T.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .fbode import DEFAULT_STEPS, TrajectoryPair, forward_integrate, time_grid

__all__ = [
    "RiccatiSolution",
    "LQField",
    "riccati_solve",
    "lq_field",
    "scalar_riccati",
    "mf_lq_solve",
]

BLOWUP = 1e12


@dataclass
class RiccatiSolution:
    grid: np.ndarray
    P: np.ndarray
    terminal: np.ndarray

    def at(self, t: float) -> np.ndarray:
        """P(t), linear between grid nodes."""
        g = self.grid
        if t < g[0] - 1e-12 or t > g[-1] + 1e-12:
            raise DomainError(f"time {t} outside [{g[0]}, {g[-1]}]")
        if g.shape[0] == 1:
            return self.P[0].copy()
        j = int(np.clip(np.searchsorted(g, t, side="right") - 1, 0, g.shape[0] - 2))
        w = min(max((t - g[j]) / (g[j + 1] - g[j]), 0.0), 1.0)
        return (1.0 - w) * self.P[j] + w * self.P[j + 1]


def riccati_solve(A, M, M_T, G, interval: tuple[float, float], *,
                  steps_per_unit: int = DEFAULT_STEPS) -> RiccatiSolution:
    """Backward RK4 for the Riccati equation, symmetrised after every step.

    Raises
    ------
    DomainError
        On finite-time blow-up (norm above 1e12).
    """
    A, M, M_T, G = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, M, M_T, G))
    grid = time_grid(interval[0], interval[1], steps_per_unit)
    K = grid.shape[0] - 1
    d = M_T.shape[0]
    P = np.empty((K + 1, d, d))
    P[K] = 0.5 * (M_T + M_T.T)

    def rate(X):  # dP/ds
        return -(X @ A + A.T @ X - X @ G @ X + M)

    for j in range(K, 0, -1):
        h = grid[j - 1] - grid[j]
        cur = P[j]
        k1 = rate(cur)
        k2 = rate(cur + 0.5 * h * k1)
        k3 = rate(cur + 0.5 * h * k2)
        k4 = rate(cur + h * k3)
        nxt = cur + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        nxt = 0.5 * (nxt + nxt.T)
        if not np.all(np.isfinite(nxt)) or np.abs(nxt).max() > BLOWUP:
            raise DomainError(f"Riccati solution blows up near s={grid[j - 1]:.6g}")
        P[j - 1] = nxt
    return RiccatiSolution(grid, P, M_T)


def scalar_riccati(a: float, m: float, g: float, q_T: float, tau):
    """Closed-form scalar Riccati solution at time-to-go ``tau``.

    Solves dP/dtau = 2 a P - g P^2 + m with P(0) = q_T.  Writing P = X / Y
    with (X, Y)' = H (X, Y), H = [[a, m], [g, -a]], and using H^2 = w^2 I,

        P = (q_T + S (a q_T + m)) / (1 + S (g q_T - a)),

    where S = tanh(w tau)/w (tan for w^2 < 0, tau for w = 0).  This form has
    no cancellation as g -> 0.
    """
    tau = np.asarray(tau, dtype=float)
    w2 = a * a + m * g
    if w2 > 0:
        w = math.sqrt(w2)
        S = np.tanh(w * tau) / w
    elif w2 < 0:
        w = math.sqrt(-w2)
        S = np.tan(w * tau) / w
    else:
        S = tau
    with np.errstate(divide="ignore", invalid="ignore"):
        return (q_T + S * (a * q_T + m)) / (1.0 + S * (g * q_T - a))


class LQField:
    """Gamma(x, t) = P(t) x, with the closed-loop trajectory and value."""

    def __init__(self, sol: RiccatiSolution, spec=None):
        self.sol = sol
        self.spec = spec

    def evaluate(self, x, t: float):
        return np.asarray(x, dtype=float) @ self.sol.at(t).T

    def value(self, x, t: float) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ self.sol.at(t) @ x)

    def trajectory(self, x, t: float = 0.0) -> TrajectoryPair:
        if self.spec is None:
            raise ValueError("trajectory needs the problem spec")
        grid, y = forward_integrate(self.spec, self, x, (t, self.sol.grid[-1]))
        z = np.stack([self.evaluate(y[j], grid[j]) for j in range(grid.shape[0])])
        return TrajectoryPair(grid, y, z, self.spec.control(z))


def lq_field(sol: RiccatiSolution, x, t: float) -> np.ndarray:
    return LQField(sol).evaluate(x, t)


def mf_lq_solve(n: int, A, B, N, Q, s_coupling: float, M_T_term, interval, *,
                terminal_coupling: float | None = None,
                steps_per_unit: int = DEFAULT_STEPS):
    """Deviation/mean Riccati pair for the quadratic mean-field cost family.

    With running cost 1/2 (x - s xbar)^T Q (x - s xbar), deviations from
    the mean see weight Q and the mean sees (1 - s)^2 Q; the terminal cost
    splits the same way with its own coupling.  The particle field is
    z_i = P_dev (x_i - xbar) + P_mean xbar.

    Returns
    -------
    (RiccatiSolution, RiccatiSolution)
        Deviation and mean solutions.
    """
    def square(v, k):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        return v.item() * np.eye(k) if v.size == 1 else v.reshape(k, k)

    A, Q, QT = square(A, n), square(Q, n), square(M_T_term, n)
    B = square(B, n) if np.size(B) == 1 else np.asarray(B, dtype=float).reshape(n, -1)
    N = square(N, B.shape[1])
    s_T = s_coupling if terminal_coupling is None else terminal_coupling
    G = B @ np.linalg.solve(N, B.T)
    dev = riccati_solve(A, Q, QT, G, interval, steps_per_unit=steps_per_unit)
    mean = riccati_solve(A, (1 - s_coupling) ** 2 * Q, (1 - s_T) ** 2 * QT, G, interval,
                         steps_per_unit=steps_per_unit)
    return dev, mean
