"""Control problems on R^d with drift nonlinear in the state and linear in the control.

A problem is the data of

    dx/ds = A(x) + B v(s),   J = int F(x) ds + F_T(x(T)) + 1/2 int (v, N v) ds

together with the scalar structure constants that every downstream bound
depends on.  Drift and cost objects are vectorised: they accept arrays of
shape ``(..., d)`` and broadcast over the leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from .errors import ProblemError

__all__ = [
    "LinearDrift",
    "SaturatingDrift",
    "QuadraticCost",
    "ProblemSpec",
    "GramOperator",
    "AssumptionRecord",
    "AssumptionReport",
    "SamplePlan",
    "build_problem",
    "load_config",
    "gram",
    "check_assumptions",
    "fd_hessian",
]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearDrift:
    """A(x) = A x."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(np.atleast_2d(self.matrix)))

    def __call__(self, x):
        return np.asarray(x) @ self.matrix.T

    def jacobian(self, x):
        x = np.asarray(x)
        return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape)

    def second_derivative_action(self, x, z):
        d = self.matrix.shape[0]
        return np.zeros(np.shape(x)[:-1] + (d, d))


@dataclass(frozen=True, eq=False)
class SaturatingDrift:
    """A(x) = a x / (1 + |x|), radially saturating.

    ``|DA(x)|`` peaks at the origin, so gamma = |a|.  The Jacobian is
    Lipschitz with the weighted constant b = 2|a| (attained as x1, x2 -> 0
    along a ray).
    """

    scale: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return self.scale * x / (1.0 + r)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        r = np.linalg.norm(x, axis=-1)[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            radial = np.where(r > 0, outer / (r * (1.0 + r) ** 2), 0.0)
        return self.scale * (np.eye(d) / (1.0 + r) - radial)

    def second_derivative_action(self, x, z):
        return _fd_second_action(self.jacobian, x, z)


def _fd_second_action(jacobian, x, z, step=1e-6):
    """Hessian of x -> (A(x), z), by central differences of the Jacobian."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    d = x.shape[-1]
    eps = step * (1.0 + np.linalg.norm(x, axis=-1))[..., None]
    out = np.empty(x.shape[:-1] + (d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        jp = jacobian(x + eps * e)
        jm = jacobian(x - eps * e)
        # column j of K is (dDA/dx_j)^T z
        out[..., :, j] = np.einsum("...ki,...k->...i", jp - jm, z) / (2.0 * eps)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """F(x) = 1/2 x^T Q x + c * sum_i log cosh(x_i).

    The log-cosh part is convex with second derivative in (0, 1], so the
    Hessian spectrum lies in [lambda_min(Q), lambda_max(Q) + c].
    """

    Q: np.ndarray
    convex_weight: float = 0.0

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T, atol=1e-12, rtol=0):
            raise ProblemError("cost matrix Q must be square and symmetric")
        if self.convex_weight < 0:
            raise ProblemError("convex_weight must be nonnegative")
        object.__setattr__(self, "Q", _frozen(0.5 * (Q + Q.T)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        val = 0.5 * np.einsum("...i,ij,...j->...", x, self.Q, x)
        if self.convex_weight:
            lc = np.logaddexp(x, -x) - np.log(2.0)
            val = val + self.convex_weight * lc.sum(axis=-1)
        return val

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        g = x @ self.Q
        if self.convex_weight:
            g = g + self.convex_weight * np.tanh(x)
        return g

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        H = np.broadcast_to(self.Q, x.shape[:-1] + self.Q.shape).copy()
        if self.convex_weight:
            sech2 = 1.0 / np.cosh(x) ** 2
            idx = np.arange(x.shape[-1])
            H[..., idx, idx] += self.convex_weight * sech2
        return H

    @property
    def spectrum_bounds(self) -> tuple[float, float]:
        ev = np.linalg.eigvalsh(self.Q)
        return float(ev[0]), float(ev[-1] + self.convex_weight)

    @property
    def is_zero(self) -> bool:
        return self.convex_weight == 0 and not np.any(self.Q)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Finite-dimensional instance of the control problem.

    Attributes mirror the structure constants: ``gamma`` bounds ``|DA|``,
    ``b_const`` is the weighted Lipschitz constant of ``DA``, ``nu``/``M``
    and ``nu_T``/``M_T`` bound the Hessians of the running and terminal
    costs.  A zero terminal cost is allowed (``nu_T = M_T = 0``).
    """

    drift: Any
    cost_running: Any
    cost_terminal: Any
    B: np.ndarray
    N: np.ndarray
    horizon_T: float
    gamma: float
    b_const: float
    nu: float
    M: float
    nu_T: float
    M_T: float
    name: str = "problem"

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        N = np.atleast_2d(np.asarray(self.N, dtype=float))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "N", _frozen(N))
        if N.shape != (B.shape[1], B.shape[1]):
            raise ProblemError(f"N must be {B.shape[1]}x{B.shape[1]}, got {N.shape}")
        if not np.allclose(N, N.T, atol=1e-12, rtol=0):
            raise ProblemError("N must be symmetric")
        if not np.all(np.isfinite(N)) or np.linalg.cond(N) > 1e14:
            raise ProblemError("singular N")
        if self.horizon_T < 0:
            raise ProblemError("horizon must be nonnegative")
        if self.nu <= 0:
            raise ProblemError("running-cost lower Hessian bound nu must be positive")
        if self.M < self.nu:
            raise ProblemError("need nu <= M")
        if self.nu_T < 0 or self.M_T < self.nu_T:
            raise ProblemError("need 0 <= nu_T <= M_T")
        if self.nu_T == 0 and self.M_T != 0:
            raise ProblemError("terminal lower Hessian bound nu_T must be positive")
        if self.gamma < 0 or self.b_const < 0:
            raise ProblemError("gamma and b must be nonnegative")

    @property
    def dim(self) -> int:
        return self.B.shape[0]

    @property
    def ctrl_dim(self) -> int:
        return self.B.shape[1]

    def drift_jacobian(self, x):
        return self.drift.jacobian(x)

    def drift_second_action(self, x, z):
        """Hessian of ``x -> (A(x), z)``; finite differences when not provided."""
        fn = getattr(self.drift, "second_derivative_action", None)
        if fn is None:
            return _fd_second_action(self.drift.jacobian, x, z)
        return fn(x, z)

    def running_grad(self, x):
        return self.cost_running.gradient(x)

    def terminal_grad(self, x):
        return self.cost_terminal.gradient(x)

    def running_hessian(self, x):
        fn = getattr(self.cost_running, "hessian", None)
        return fn(x) if fn is not None else fd_hessian(self.cost_running.gradient, x)

    def terminal_hessian(self, x):
        fn = getattr(self.cost_terminal, "hessian", None)
        return fn(x) if fn is not None else fd_hessian(self.cost_terminal.gradient, x)

    @cached_property
    def N_inv(self) -> np.ndarray:
        return _frozen(np.linalg.inv(self.N))

    @cached_property
    def G(self) -> np.ndarray:
        """B N^{-1} B^T."""
        G = self.B @ self.N_inv @ self.B.T
        return _frozen(0.5 * (G + G.T))

    def control(self, z):
        """Optimal control -N^{-1} B^T z for adjoint values z of shape (..., d)."""
        return -np.asarray(z) @ (self.N_inv @ self.B.T).T

    def replace(self, **changes) -> "ProblemSpec":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class GramOperator:
    G: np.ndarray
    m_coer: float
    g_norm: float

    @property
    def coercive(self) -> bool:
        return self.m_coer > 0

    @property
    def status(self) -> str:
        return "ok" if self.coercive else "coercivity fails"


def gram(spec_or_B, N=None, *, tol: float = 1e-12) -> GramOperator:
    """Return ``G = B N^{-1} B^T`` with its extreme eigenvalues.

    Accepts either a :class:`ProblemSpec` or the raw pair ``(B, N)``.
    Eigenvalues below ``tol * max(1, g_norm)`` are reported as zero.
    """
    if isinstance(spec_or_B, ProblemSpec):
        B, N = spec_or_B.B, spec_or_B.N
    else:
        B = np.atleast_2d(np.asarray(spec_or_B, dtype=float))
        N = np.atleast_2d(np.asarray(N, dtype=float))
    if not np.all(np.isfinite(N)) or np.linalg.cond(N) > 1e14:
        raise ProblemError("singular N")
    G = B @ np.linalg.solve(N, B.T)
    G = 0.5 * (G + G.T)
    ev = np.linalg.eigvalsh(G)
    g_norm = float(max(ev[-1], 0.0))
    m = float(ev[0])
    if abs(m) <= tol * max(1.0, g_norm):
        m = 0.0
    return GramOperator(G=_frozen(G), m_coer=m, g_norm=g_norm)


# --------------------------------------------------------------------------
# configuration


def _matrix(value, rows: int, cols: int | None = None, what: str = "matrix"):
    cols = rows if cols is None else cols
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        if rows != cols:
            raise ProblemError(f"{what}: scalar shorthand needs a square shape")
        return float(a) * np.eye(rows)
    a = np.atleast_2d(a)
    if a.shape != (rows, cols):
        raise ProblemError(f"{what}: expected shape {(rows, cols)}, got {a.shape}")
    return a


def _infer_dim(config: dict) -> int:
    if "dim" in config:
        return int(config["dim"])
    drift = config.get("drift", {})
    for candidate in (drift.get("matrix") if isinstance(drift, dict) else drift,
                      config.get("B"),
                      (config.get("running_cost") or {}).get("Q")):
        if candidate is not None and np.ndim(candidate) == 2:
            return int(np.shape(candidate)[0])
    return 1


def _cost(cfg, d: int, what: str) -> QuadraticCost:
    if cfg is None:
        raise ProblemError(f"missing {what}")
    if not isinstance(cfg, dict):
        cfg = {"Q": cfg}
    family = cfg.get("family", "quadratic")
    if family != "quadratic":
        raise ProblemError(f"unknown cost family {family!r}")
    return QuadraticCost(_matrix(cfg.get("Q", 0.0), d, what=f"{what}.Q"),
                         float(cfg.get("convex_weight", 0.0)))


def build_problem(config: dict) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from a nested key/value description.

    Recognised keys: ``dim``, ``horizon`` (or ``T``), ``drift`` (``family``:
    ``linear`` with ``matrix``, or ``saturating`` with ``scale``), ``B``,
    ``N``, ``running_cost`` and ``terminal_cost`` (``Q`` plus optional
    ``convex_weight``), and ``constants`` to override derived constants.
    Scalars stand for multiples of the identity.
    """
    if not isinstance(config, dict):
        raise ProblemError("config must be a mapping")
    d = _infer_dim(config)
    drift_cfg = config.get("drift", 0.0)
    if not isinstance(drift_cfg, dict):
        drift_cfg = {"family": "linear", "matrix": drift_cfg}
    family = drift_cfg.get("family", "linear")
    if family == "linear":
        A = _matrix(drift_cfg.get("matrix", 0.0), d, what="drift.matrix")
        drift = LinearDrift(A)
        gamma, b = float(np.linalg.norm(A, 2)), 0.0
    elif family == "saturating":
        a = float(drift_cfg["scale"])
        drift = SaturatingDrift(a)
        gamma, b = abs(a), 2.0 * abs(a)
    else:
        raise ProblemError(f"unknown drift family {family!r}")

    B_cfg = config.get("B", 1.0)
    if np.ndim(B_cfg) == 0:
        B = float(B_cfg) * np.eye(d)
    else:
        B = np.atleast_2d(np.asarray(B_cfg, dtype=float))
        if B.shape[0] != d:
            raise ProblemError(f"B must have {d} rows")
    p = B.shape[1]
    N = _matrix(config.get("N", 1.0), p, what="N")
    if not np.allclose(N, N.T, atol=1e-12, rtol=0):
        raise ProblemError("N must be symmetric")
    if np.linalg.cond(N) > 1e14:
        raise ProblemError("singular N")

    run = _cost(config.get("running_cost"), d, "running_cost")
    term = _cost(config.get("terminal_cost", 0.0), d, "terminal_cost")
    nu, M = run.spectrum_bounds
    nu_T, M_T = term.spectrum_bounds
    if term.is_zero:
        nu_T = M_T = 0.0
    elif nu_T <= 0:
        raise ProblemError("terminal cost must be uniformly convex (nu_T > 0)")
    if nu <= 0:
        raise ProblemError("running cost must be uniformly convex (nu > 0)")

    consts = dict(gamma=gamma, b_const=b, nu=nu, M=M, nu_T=nu_T, M_T=M_T)
    aliases = {"b": "b_const"}
    for key, val in (config.get("constants") or {}).items():
        key = aliases.get(key, key)
        if key not in consts:
            raise ProblemError(f"unknown constant {key!r}")
        consts[key] = float(val)

    T = float(config.get("horizon", config.get("T", 1.0)))
    return ProblemSpec(drift=drift, cost_running=run, cost_terminal=term, B=B, N=N,
                       horizon_T=T, name=str(config.get("name", "problem")), **consts)


def load_config(path: str | Path) -> dict:
    """Read a YAML (or JSON) configuration file."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ProblemError(f"{path}: expected a mapping at top level")
    return data


# --------------------------------------------------------------------------
# assumption audit


@dataclass(frozen=True)
class AssumptionRecord:
    name: str
    samples: int
    worst_margin: float
    passed: bool


@dataclass(frozen=True)
class AssumptionReport:
    records: tuple[AssumptionRecord, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def __getitem__(self, name: str) -> AssumptionRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "records": [
                {"name": r.name, "samples": r.samples,
                 "worst_margin": r.worst_margin, "passed": r.passed}
                for r in self.records
            ],
        }


@dataclass(frozen=True)
class SamplePlan:
    """Sampling plan for the assumption audit.

    ``count`` random points uniform in the ball of radius ``radius``, plus
    the origin, points on the coordinate axes, and close pairs at each of
    ``pair_offsets`` for the Jacobian Lipschitz ratio.
    """

    count: int = 64
    radius: float = 3.0
    seed: int = 0
    pair_offsets: Sequence[float] = field(default=(1e-4, 1e-2, 0.3))

    def points(self, d: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        g = rng.standard_normal((self.count, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = self.radius * rng.random(self.count) ** (1.0 / d)
        axes = np.concatenate([np.eye(d), -np.eye(d)]) * self.radius / 2
        return np.concatenate([np.zeros((1, d)), axes, g * rad[:, None]])

    def pairs(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(self.seed + 1)
        pts = self.points(d)
        first, second = [], []
        for eps in self.pair_offsets:
            u = rng.standard_normal(pts.shape)
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            first.append(pts)
            second.append(pts + eps * u)
        perm = rng.permutation(len(pts))
        first.append(pts)
        second.append(pts[perm])
        x1, x2 = np.concatenate(first), np.concatenate(second)
        keep = np.linalg.norm(x1 - x2, axis=1) > 0
        return x1[keep], x2[keep]


def fd_hessian(gradient: Callable, x, step: float = 1e-5) -> np.ndarray:
    """Central-difference Hessian from a gradient, step scaled by (1 + |x|)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    eps = step * (1.0 + np.linalg.norm(x, axis=-1))[..., None]
    H = np.empty(x.shape[:-1] + (d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        H[..., :, j] = (gradient(x + eps * e) - gradient(x - eps * e)) / (2.0 * eps)
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def _hessian_record(name, cost, lo, hi, pts, tol) -> AssumptionRecord:
    if lo == 0 and hi == 0:
        # zero terminal cost: only the identically-zero Hessian is admissible
        g = cost.gradient(pts)
        worst = -float(np.max(np.abs(g))) if g.size else 0.0
        return AssumptionRecord(name, len(pts), worst, worst >= -tol)
    ev = np.linalg.eigvalsh(fd_hessian(cost.gradient, pts))
    worst = float(min(np.min(ev[:, 0] - lo), np.min(hi - ev[:, -1])))
    return AssumptionRecord(name, len(pts), worst, worst >= -tol)


def check_assumptions(spec: ProblemSpec, samples: SamplePlan | np.ndarray | None = None,
                      *, tol: float = 1e-10, hessian_tol: float = 1e-6) -> AssumptionReport:
    """Audit the declared structure constants on sampled states.

    Each record holds the worst margin (declared bound minus observed value)
    over the samples; a record passes when that margin is >= -tol.
    Failures are reported, never raised.
    """
    if samples is None:
        samples = SamplePlan()
    d = spec.dim
    if isinstance(samples, SamplePlan):
        pts = samples.points(d)
        x1, x2 = samples.pairs(d)
    else:
        pts = np.atleast_2d(np.asarray(samples, dtype=float))
        if len(pts) == 0:
            raise ProblemError("empty sample set")
        n = len(pts)
        x1 = np.concatenate([pts, pts])
        x2 = np.concatenate([np.roll(pts, 1, axis=0), pts + 1e-3])
        keep = np.linalg.norm(x1 - x2, axis=1) > 0
        x1, x2 = x1[keep], x2[keep]
        del n

    recs = []
    zero = np.zeros(d)
    origin = max(np.max(np.abs(spec.drift(zero))),
                 np.max(np.abs(spec.running_grad(zero))),
                 np.max(np.abs(spec.terminal_grad(zero))))
    recs.append(AssumptionRecord("normalization", 1, -float(origin), origin <= 1e-12))

    J = spec.drift_jacobian(pts)
    norms = np.linalg.norm(J, ord=2, axis=(-2, -1))
    worst = float(spec.gamma - norms.max())
    recs.append(AssumptionRecord("drift_jacobian_bound", len(pts), worst,
                                 worst >= -tol * (1 + spec.gamma)))

    dJ = np.linalg.norm(spec.drift_jacobian(x1) - spec.drift_jacobian(x2), ord=2, axis=(-2, -1))
    weight = 1.0 + np.maximum(np.linalg.norm(x1, axis=1), np.linalg.norm(x2, axis=1))
    ratio = dJ * weight / np.linalg.norm(x1 - x2, axis=1)
    worst = float(spec.b_const - ratio.max())
    recs.append(AssumptionRecord("drift_jacobian_lipschitz", len(x1), worst,
                                 worst >= -tol * (1 + spec.b_const)))

    resid = np.linalg.norm(spec.drift(pts) - np.einsum("...ij,...j->...i", J, pts), axis=1)
    worst = float(np.min(0.5 * spec.b_const * np.linalg.norm(pts, axis=1) - resid))
    recs.append(AssumptionRecord("drift_linearization_gap", len(pts), worst, worst >= -tol))

    recs.append(_hessian_record("running_hessian", spec.cost_running, spec.nu, spec.M,
                                pts, hessian_tol))
    recs.append(_hessian_record("terminal_hessian", spec.cost_terminal, spec.nu_T, spec.M_T,
                                pts, hessian_tol))

    g = gram(spec)
    recs.append(AssumptionRecord("coercivity", 1, g.m_coer, g.coercive))
    return AssumptionReport(tuple(recs))
