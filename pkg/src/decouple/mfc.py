"""Mean-field-type control through particle lifting.

A uniform empirical measure on N points of R^n is lifted to R^{nN}.  We
work in scaled coordinates X~ = X / sqrt(N), in which the Euclidean inner
product equals the 1/N-weighted inner product of the particle space, so
the lifted problem is an ordinary ``ProblemSpec``.  Per-particle states and
adjoints are recovered as Y_i = sqrt(N) y~_i and Z_i = sqrt(N) z~_i.

Running cost family: f(x, m) = 1/2 (x - s xbar)^T Q (x - s xbar), so

    F(m) = int 1/2 x^T Q x dm + 1/2 (s^2 - 2 s) xbar^T Q xbar,
    dF/dm(m)(x) = 1/2 x^T Q x + (s^2 - 2 s) xbar^T Q x,
    D dF/dm(m)(x) = Q x + (s^2 - 2 s) Q xbar.

The terminal family is the same with (Q_T, s_T).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import linear_sum_assignment

from .errors import DomainError, ProblemError
from .fbode import DEFAULT_STEPS, DEFAULT_TOL, SolveReport, TrajectoryPair, global_solve, value_eval
from .problem import LinearDrift, ProblemSpec, QuadraticCost

__all__ = [
    "ParticleMeasure",
    "LiftedState",
    "MFProblemSpec",
    "MFSolution",
    "DVdmResult",
    "pushforward",
    "pushforward_map",
    "lift_problem",
    "lifted_cost",
    "particle_gradient",
    "mfc_solve",
    "value_from_solution",
    "value_measure",
    "dVdm_eval",
    "measure_bellman_residual",
    "w2_empirical",
    "continuity_diagnostic",
]

log = logging.getLogger(__name__)

MAX_ASSIGNMENT = 64


@dataclass(frozen=True, eq=False)
class ParticleMeasure:
    """Uniform empirical measure (1/N) sum_i delta_{x_i}; points has shape (N, n)."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.shape[0] < 1:
            raise ProblemError("empty measure")
        if not np.all(np.isfinite(p)):
            raise ProblemError("particle positions must be finite")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def second_moment(self) -> float:
        return float(np.mean(np.sum(self.points ** 2, axis=1)))

    def canonical_order(self) -> np.ndarray:
        """Lexicographic permutation of the points (first coordinate primary)."""
        return np.lexsort(self.points.T[::-1])

    def same_points(self, other: "ParticleMeasure") -> bool:
        """Equality as measures: identical sorted point lists."""
        if self.points.shape != other.points.shape:
            return False
        a = self.points[self.canonical_order()]
        b = other.points[other.canonical_order()]
        return bool(np.array_equal(a, b))


@dataclass(frozen=True, eq=False)
class LiftedState:
    """X in the particle space: X(x_i) for every reference particle x_i."""

    values: np.ndarray
    reference: ParticleMeasure

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(self.reference.size, -1)
        object.__setattr__(self, "values", v)

    @classmethod
    def identity(cls, m: ParticleMeasure) -> "LiftedState":
        return cls(m.points.copy(), m)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.mean(np.sum(self.values ** 2, axis=1))))


def pushforward(X: LiftedState) -> ParticleMeasure:
    """Law of X under the reference measure."""
    return ParticleMeasure(X.values)


def pushforward_map(fn: Callable[[np.ndarray], np.ndarray], m: ParticleMeasure) -> ParticleMeasure:
    """Image of m under a map applied row-wise to its points."""
    return ParticleMeasure(np.asarray(fn(m.points), dtype=float).reshape(m.size, -1))


def _mat(a, rows, cols=None):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    cols = rows if cols is None else cols
    if a.size == 1 and rows == cols:
        return a.item() * np.eye(rows)
    return a.reshape(rows, cols)


@dataclass(frozen=True, eq=False)
class MFProblemSpec:
    """Linear dynamics with the quadratic mean-coupled cost family."""

    n: int
    A: np.ndarray
    B: np.ndarray
    N_weight: np.ndarray
    Q: np.ndarray
    s: float
    Q_T: np.ndarray
    s_T: float
    horizon_T: float

    def __post_init__(self):
        n = self.n
        object.__setattr__(self, "A", _mat(self.A, n))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        B = B.item() * np.eye(n) if B.size == 1 else B.reshape(n, -1)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "N_weight", _mat(self.N_weight, B.shape[1]))
        object.__setattr__(self, "Q", _mat(self.Q, n))
        object.__setattr__(self, "Q_T", _mat(self.Q_T, n))
        for name in ("Q", "Q_T"):
            M = getattr(self, name)
            if not np.allclose(M, M.T, atol=1e-12):
                raise ProblemError(f"{name} must be symmetric")
        if np.linalg.eigvalsh(self.Q)[0] <= 0:
            raise ProblemError("running weight Q must be positive definite")
        if np.linalg.eigvalsh(self.Q_T)[0] < 0:
            raise ProblemError("terminal weight Q_T must be positive semidefinite")

    @classmethod
    def from_config(cls, cfg: dict) -> "MFProblemSpec":
        try:
            n = int(cfg.get("n", 1))
            return cls(n=n, A=cfg.get("A", 0.0), B=cfg.get("B", 1.0),
                       N_weight=cfg.get("N_weight", 1.0), Q=cfg.get("Q", 1.0),
                       s=float(cfg.get("s", 0.0)), Q_T=cfg.get("Q_T", 0.0),
                       s_T=float(cfg.get("s_T", cfg.get("s", 0.0))),
                       horizon_T=float(cfg.get("T", cfg.get("horizon", 1.0))))
        except (TypeError, ValueError) as exc:
            raise ProblemError(f"bad mean-field config: {exc}") from exc

    @property
    def G(self) -> np.ndarray:
        return self.B @ np.linalg.solve(self.N_weight, self.B.T)

    @property
    def flags(self) -> dict:
        G = self.G
        g_ev = np.linalg.eigvalsh(0.5 * (G + G.T))
        M = float(np.linalg.eigvalsh(self.Q)[-1])
        return {
            "coercive": bool(g_ev[0] > 0),
            "drift_bounded": bool(np.linalg.norm(self.A, 2) < M * g_ev[-1]),
            "separable_cost": bool(self.s == 0 and self.s_T == 0),
        }

    def running_density(self, points: np.ndarray) -> np.ndarray:
        """f(x_i, m) for every particle of the measure given by ``points``."""
        dev = points - self.s * points.mean(axis=0)
        return 0.5 * np.einsum("ki,ij,kj->k", dev, self.Q, dev)

    def terminal_density(self, points: np.ndarray) -> np.ndarray:
        dev = points - self.s_T * points.mean(axis=0)
        return 0.5 * np.einsum("ki,ij,kj->k", dev, self.Q_T, dev)

    def running_functional(self, points) -> float:
        return float(np.mean(self.running_density(np.asarray(points, dtype=float))))

    def terminal_functional(self, points) -> float:
        return float(np.mean(self.terminal_density(np.asarray(points, dtype=float))))


def _dFdm(Q, s, points):
    """(dF/dm(x_i), D dF/dm(x_i)) at every particle."""
    xbar = points.mean(axis=0)
    c = s * s - 2 * s
    val = 0.5 * np.einsum("ki,ij,kj->k", points, Q, points) + c * points @ (Q @ xbar)
    grad = points @ Q.T + c * (Q @ xbar)
    return val, grad


def particle_gradient(mf: MFProblemSpec, points, terminal: bool = False) -> np.ndarray:
    """D dF/dm(m)(x_i) in closed form, shape (N, n)."""
    Q, s = (mf.Q_T, mf.s_T) if terminal else (mf.Q, mf.s)
    return _dFdm(Q, s, np.asarray(points, dtype=float))[1]


def _lift_weight(Q, s, N):
    ones = np.ones((N, N))
    return np.kron(np.eye(N), Q) + (s * s - 2 * s) / N * np.kron(ones, Q)


def _bounds(Q, s, N):
    ev = np.linalg.eigvalsh(Q)
    if not np.any(Q):
        return 0.0, 0.0
    mean_factor = (1 - s) ** 2
    if N == 1:
        return ev[0] * mean_factor, ev[-1] * mean_factor
    return ev[0] * min(1.0, mean_factor), ev[-1] * max(1.0, mean_factor)


def lift_problem(mf: MFProblemSpec, m: ParticleMeasure) -> ProblemSpec:
    """Lifted problem on R^{nN} in scaled coordinates.

    The lifted running cost in scaled coordinates is
    1/2 X~^T (I (x) Q + (s^2 - 2 s)/N J (x) Q) X~, J the all-ones matrix.
    """
    if m.size < 1:
        raise ProblemError("empty measure")
    if m.n != mf.n:
        raise ProblemError(f"measure lives in R^{m.n}, problem in R^{mf.n}")
    N = m.size
    I = np.eye(N)
    A = np.kron(I, mf.A)
    B = np.kron(I, mf.B)
    Nw = np.kron(I, mf.N_weight)
    Q_run = _lift_weight(mf.Q, mf.s, N)
    Q_term = _lift_weight(mf.Q_T, mf.s_T, N)
    nu, M = _bounds(mf.Q, mf.s, N)
    nu_T, M_T = _bounds(mf.Q_T, mf.s_T, N)
    if nu <= 0:
        raise ProblemError("lifted running cost is not strictly convex (s = 1)")
    return ProblemSpec(
        drift=LinearDrift(A), cost_running=QuadraticCost(0.5 * (Q_run + Q_run.T)),
        cost_terminal=QuadraticCost(0.5 * (Q_term + Q_term.T)), B=B, N=Nw,
        horizon_T=mf.horizon_T, gamma=float(np.linalg.norm(mf.A, 2)), b_const=0.0,
        nu=float(nu), M=float(M), nu_T=float(nu_T), M_T=float(M_T), name="lifted")


def lifted_cost(mf: MFProblemSpec, points) -> float:
    """Lifted running functional F(X (x) m) from particle positions (N, n)."""
    return mf.running_functional(points)


@dataclass
class MFSolution:
    grid: np.ndarray
    Y: np.ndarray  # (K+1, N, n) per-particle states, in the caller's particle order
    Z: np.ndarray  # (K+1, N, n) per-particle adjoints
    controls: np.ndarray  # (K+1, N, p)
    report: SolveReport
    lifted: TrajectoryPair
    spec: ProblemSpec
    field: object = field(repr=False, default=None)

    @property
    def N(self) -> int:
        return self.Y.shape[1]


def mfc_solve(mf: MFProblemSpec, m: ParticleMeasure, t: float = 0.0, tol: float = DEFAULT_TOL,
              *, strategy: str = "recursive", steps_per_unit: int = DEFAULT_STEPS,
              backend: str | None = None) -> MFSolution:
    """Per-particle optimality system solved through the lifted problem.

    Particles are put in canonical (sorted) order before lifting so that
    relabelling the input does not change any floating-point operation.
    """
    order = m.canonical_order()
    inv = np.argsort(order)
    sorted_m = ParticleMeasure(m.points[order])
    spec = lift_problem(mf, sorted_m)
    N, n = m.size, m.n
    root = np.sqrt(N)
    x0 = sorted_m.points.reshape(-1) / root
    pair, fld, rep = global_solve(spec, x0, strategy, tol, t=t, steps_per_unit=steps_per_unit,
                                  backend=backend)
    K1 = pair.grid.shape[0]
    Y = (root * pair.y).reshape(K1, N, n)[:, inv, :]
    Z = (root * pair.z).reshape(K1, N, n)[:, inv, :]
    controls = -Z @ (np.linalg.solve(mf.N_weight, mf.B.T)).T
    return MFSolution(pair.grid, Y, Z, controls, rep, pair, spec, fld)


def _canonical(sol: MFSolution, m: ParticleMeasure):
    order = m.canonical_order()
    return sol.Y[:, order, :], sol.Z[:, order, :]


def value_from_solution(mf: MFProblemSpec, sol: MFSolution, m: ParticleMeasure) -> float:
    """Running functional, terminal functional and control energy along the flow."""
    Y, Z = _canonical(sol, m)
    BtZ = Z @ mf.B
    Ninv = np.linalg.inv(mf.N_weight)
    energy = 0.5 * np.einsum("kni,ij,knj->kn", BtZ, Ninv, BtZ).mean(axis=1)
    run = np.array([mf.running_functional(Y[k]) for k in range(Y.shape[0])])
    total = float(trapezoid(run + energy, sol.grid)) if sol.grid.shape[0] > 1 else 0.0
    return total + mf.terminal_functional(Y[-1])


def value_measure(mf: MFProblemSpec, m: ParticleMeasure, t: float = 0.0, *,
                  tol: float = DEFAULT_TOL, solution: MFSolution | None = None, **kw) -> float:
    """V(m, t) by quadrature of the cost along the optimal particle flow."""
    sol = solution or mfc_solve(mf, m, t, tol, **kw)
    return value_from_solution(mf, sol, m)


@dataclass
class DVdmResult:
    index: int
    value: float             # dV/dm(m, t)(x_i), un-normalised
    gradient: np.ndarray     # Z_i(t)
    fd_gradient: np.ndarray  # N * dV/dx_i by central differences
    rel_error: float


def dVdm_eval(mf: MFProblemSpec, m: ParticleMeasure, t: float, i: int, *,
              tol: float = DEFAULT_TOL, solution: MFSolution | None = None,
              rel_step: float = 1e-4, check: bool = True, **kw) -> DVdmResult:
    """Functional derivative of the value at particle i.

    The value is the path integral along particle i's trajectory, without
    re-centring; the gradient is Z_i(t) and is cross-checked against
    N times the central difference of V in particle i's position.
    """
    sol = solution or mfc_solve(mf, m, t, tol, **kw)
    Y, Z = sol.Y, sol.Z
    run = np.array([_dFdm(mf.Q, mf.s, Y[k])[0][i] for k in range(Y.shape[0])])
    term = _dFdm(mf.Q_T, mf.s_T, Y[-1])[0][i]
    BtZ = Z[:, i, :] @ mf.B
    energy = 0.5 * np.einsum("ki,ij,kj->k", BtZ, np.linalg.inv(mf.N_weight), BtZ)
    val = float(trapezoid(run + energy, sol.grid)) + float(term) if sol.grid.shape[0] > 1 \
        else float(term)
    grad = Z[0, i, :].copy()
    fd = np.full(mf.n, np.nan)
    err = np.nan
    if check:
        eps = rel_step * (1.0 + np.linalg.norm(m.points[i]))
        for k in range(mf.n):
            pts_p = m.points.copy()
            pts_m = m.points.copy()
            pts_p[i, k] += eps
            pts_m[i, k] -= eps
            vp = value_measure(mf, ParticleMeasure(pts_p), t, tol=tol, **kw)
            vm = value_measure(mf, ParticleMeasure(pts_m), t, tol=tol, **kw)
            fd[k] = m.size * (vp - vm) / (2 * eps)
        err = float(np.max(np.abs(fd - grad)) / max(1.0, float(np.linalg.norm(grad))))
    return DVdmResult(i, val, grad, fd, err)


def measure_bellman_residual(mf: MFProblemSpec, m: ParticleMeasure, t: float, *,
                             delta: float = 1e-4, tol: float = DEFAULT_TOL,
                             gradient_shift: float = 0.0, **kw) -> float:
    """Residual of the Bellman equation on measures at (m, t).

    ``gradient_shift`` adds ``shift * x_i`` to every particle gradient; it is
    a diagnostic for the sensitivity of the residual.
    """
    T = mf.horizon_T
    if t - delta < 0 or t + delta > T:
        raise DomainError("time stencil does not fit inside [0, T]")
    vp = value_measure(mf, m, t + delta, tol=tol, **kw)
    vm = value_measure(mf, m, t - delta, tol=tol, **kw)
    sol = mfc_solve(mf, m, t, tol, **kw)
    order = m.canonical_order()
    pts = m.points[order]
    grads = sol.Z[0][order] + gradient_shift * pts
    drift = np.mean(np.einsum("ki,ki->k", grads, pts @ mf.A.T))
    quad = 0.5 * np.mean(np.einsum("ki,ij,kj->k", grads, mf.G, grads))
    res = -(vp - vm) / (2 * delta) - drift + quad - mf.running_functional(pts)
    return abs(float(res))


def w2_empirical(m1: ParticleMeasure, m2: ParticleMeasure) -> float:
    """Quadratic Wasserstein distance between equal-size uniform empirical measures."""
    if m1.size != m2.size:
        raise ProblemError("W2 needs equal particle counts")
    if m1.n != m2.n:
        raise ProblemError("measures live in different dimensions")
    if m1.n == 1:
        a = np.sort(m1.points[:, 0])
        b = np.sort(m2.points[:, 0])
        return float(np.sqrt(np.mean((a - b) ** 2)))
    if m1.size > MAX_ASSIGNMENT:
        raise ProblemError(f"exact assignment limited to N <= {MAX_ASSIGNMENT} particles")
    cost = np.sum((m1.points[:, None, :] - m2.points[None, :, :]) ** 2, axis=-1)
    r, c = linear_sum_assignment(cost)
    return float(np.sqrt(cost[r, c].mean()))


def continuity_diagnostic(mf: MFProblemSpec, m: ParticleMeasure, t: float = 0.0, *,
                          pairs: int = 4, scale: float = 0.05, seed: int = 0, **kw) -> dict:
    """Fit L in |V(m) - V(m')| <= L W2(m, m') (1 + moment) on nearby measures (logged)."""
    rng = np.random.default_rng(seed)
    v0 = value_measure(mf, m, t, **kw)
    ratios = []
    for _ in range(pairs):
        m2 = ParticleMeasure(m.points + scale * rng.standard_normal(m.points.shape))
        w = w2_empirical(m, m2)
        if w == 0:
            continue
        moment = max(m.second_moment, m2.second_moment) ** 0.5
        ratios.append(abs(value_measure(mf, m2, t, **kw) - v0) / (w * (1 + moment)))
    L = float(max(ratios)) if ratios else 0.0
    log.info("value continuity constant fitted on %d pairs: %.4g", len(ratios), L)
    return {"pairs": len(ratios), "fitted_constant": L}
