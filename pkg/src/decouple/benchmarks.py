"""Named benchmark problems and the shared verification suite."""
from __future__ import annotations

import copy

import numpy as np
from scipy.integrate import trapezoid

from .fbode import (DEFAULT_STEPS, DEFAULT_TOL, bellman_residual, global_solve, picard_local,
                    sensitivity_solve, value_eval)
from .lq import LQField, riccati_solve
from .mfc import MFProblemSpec, ParticleMeasure
from .problem import LinearDrift, ProblemSpec, build_problem
from .regime import Regime
from .verify import (contraction_monitor, direct_transcribe, gamma_gradient_check,
                     optimality_gap_check)

__all__ = [
    "PROBLEMS",
    "MEAN_FIELD",
    "names",
    "load",
    "load_mean_field",
    "riccati_oracle",
    "smooth_perturbations",
    "probe_points",
    "verify_suite",
    "bench_table",
]

PROBLEMS = {
    "scalar-lq": {
        "name": "scalar-lq", "dim": 1, "drift": 0.0, "B": 1.0, "N": 1.0,
        "running_cost": {"Q": 1.0}, "terminal_cost": {"Q": 0.5}, "T": 1.0,
    },
    "diag-lq": {
        "name": "diag-lq", "dim": 2, "drift": {"family": "linear", "matrix": [[0.1, 0.0], [0.0, -0.2]]},
        "B": 1.0, "N": 1.0, "running_cost": {"Q": 1.0}, "terminal_cost": {"Q": 0.5}, "T": 1.0,
    },
    "saturating": {
        "name": "saturating", "dim": 2, "drift": {"family": "saturating", "scale": 0.1},
        "B": 1.0, "N": 1.0, "running_cost": {"Q": 1.0, "convex_weight": 0.1},
        "terminal_cost": {"Q": 0.5}, "T": 0.6,
    },
}

MEAN_FIELD = {
    "mf-scalar": {
        "n": 1, "A": 0.0, "B": 1.0, "N_weight": 1.0, "Q": 1.0, "s": 0.5,
        "Q_T": 0.0, "s_T": 0.5, "T": 1.0,
        "points": [-1.0, -0.75, -0.5, -0.25, 0.25, 0.5, 0.75, 1.0],
    },
}


def names() -> list[str]:
    return list(PROBLEMS) + list(MEAN_FIELD)


def load(name: str) -> ProblemSpec:
    if name not in PROBLEMS:
        raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(PROBLEMS)}")
    return build_problem(copy.deepcopy(PROBLEMS[name]))


def measure_from_config(cfg: dict) -> ParticleMeasure:
    if "points" in cfg:
        return ParticleMeasure(np.asarray(cfg["points"], dtype=float))
    recipe = cfg.get("sample", {})
    rng = np.random.default_rng(int(recipe.get("seed", 0)))
    count = int(recipe.get("count", 8))
    n = int(cfg.get("n", 1))
    return ParticleMeasure(float(recipe.get("scale", 1.0)) * rng.standard_normal((count, n)))


def load_mean_field(name_or_cfg) -> tuple[MFProblemSpec, ParticleMeasure]:
    cfg = MEAN_FIELD[name_or_cfg] if isinstance(name_or_cfg, str) else name_or_cfg
    return MFProblemSpec.from_config(cfg), measure_from_config(cfg)


def _is_lq(spec: ProblemSpec) -> bool:
    return (isinstance(spec.drift, LinearDrift)
            and getattr(spec.cost_running, "convex_weight", 1) == 0
            and getattr(spec.cost_terminal, "convex_weight", 1) == 0)


def riccati_oracle(spec: ProblemSpec, t: float = 0.0):
    """LQ field for linear-quadratic specs, else None."""
    if not _is_lq(spec):
        return None
    sol = riccati_solve(spec.drift.matrix, spec.cost_running.Q, spec.cost_terminal.Q, spec.G,
                        (t, spec.horizon_T))
    return LQField(sol, spec)


def smooth_perturbations(grid: np.ndarray, ctrl_dim: int, count: int, seed: int,
                         norm: float = 1.0, modes: int = 4) -> list[np.ndarray]:
    """Random cosine-series control perturbations with L2 norm ``norm``."""
    rng = np.random.default_rng(seed)
    span = grid[-1] - grid[0]
    phase = (grid - grid[0]) / span if span > 0 else np.zeros_like(grid)
    basis = np.stack([np.cos(np.pi * k * phase) for k in range(modes)], axis=1)
    out = []
    for _ in range(count):
        v = basis @ rng.standard_normal((modes, ctrl_dim))
        l2 = np.sqrt(trapezoid(np.sum(v * v, axis=1), grid))
        out.append(norm * v / l2)
    return out


def probe_points(spec: ProblemSpec, count: int, seed: int, radius: float = 1.0,
                 t_max: float | None = None):
    """Seeded (x, t) probes with |x|_inf <= radius and t in [0, t_max)."""
    rng = np.random.default_rng(seed)
    t_max = spec.horizon_T if t_max is None else t_max
    xs = rng.uniform(-radius, radius, size=(count, spec.dim))
    ts = rng.uniform(0.0, t_max, size=count)
    return [(xs[i], float(ts[i])) for i in range(count)]


def verify_suite(spec: ProblemSpec, *, seed: int = 0, tol: float = DEFAULT_TOL,
                 steps_per_unit: int = DEFAULT_STEPS, probes: int = 10,
                 perturbations: int = 20, x0=None) -> dict:
    """All solver checks on one problem; returns plain data with pass flags."""
    reg = Regime(spec)
    x0 = np.full(spec.dim, 1.0) if x0 is None else np.asarray(x0, dtype=float)
    pair, fld, rep = global_solve(spec, x0, "recursive", tol, steps_per_unit=steps_per_unit)
    V = value_eval(spec, pair)
    out = {"benchmark": spec.name, "x": x0.tolist(), "value": V,
           "gamma": pair.z[0].tolist(), "iterations": rep.iterations}

    gap = optimality_gap_check(spec, pair, smooth_perturbations(pair.grid, spec.ctrl_dim,
                                                                 perturbations, seed))
    out["sufficiency"] = {"min_slack": gap.min_slack, "passed": gap.passed(1e-6)}

    pts = probe_points(spec, probes, seed, t_max=0.9 * spec.horizon_T)
    grad = gamma_gradient_check(spec, fld, pts)
    out["envelope"] = {"max_error": float(grad.errors.max()), "passed": grad.passed}

    lim = 1e-4 if _is_lq(spec) else 1e-3
    bt = [(x, min(max(t, 2e-4), spec.horizon_T - 2e-4)) for x, t in pts[:3]]
    res = [bellman_residual(spec, fld, x, t) for x, t in bt]
    out["bellman"] = {"max_residual": float(max(res)), "limit": lim,
                      "passed": bool(max(res) <= lim)}

    bounds = []
    for x, t in pts:
        g = fld.evaluate(x, t)
        bounds.append(float(np.linalg.norm(g) - min(reg.alpha(t), reg.beta(t)) * np.linalg.norm(x)))
    sens = sensitivity_solve(spec, pair)
    jac_gap = max(float(np.linalg.norm(sens.P[k], 2) - reg.beta(sens.grid[k]))
                  for k in range(0, sens.grid.shape[0], 10))
    out["a_priori"] = {"max_growth_excess": max(bounds), "max_jacobian_excess": jac_gap,
                       "passed": bool(max(bounds) <= 1e-6 and jac_gap <= 1e-4)}

    h = min(0.3, reg.admissible_h().h_max)
    hz = reg.admissible_h()
    _, lrep = picard_local(spec, x0, spec.horizon_T - h, horizon=hz, tol=tol,
                           steps_per_unit=steps_per_unit)
    factor = reg.contraction_factor(h)
    verdict = contraction_monitor(lrep, factor)
    out["contraction"] = {"h": h, "factor": factor, "max_ratio": max(lrep.ratios, default=0.0),
                          "verdict": verdict}

    oracle = riccati_oracle(spec)
    if oracle is not None:
        errs = []
        for x, t in probe_points(spec, 20, seed + 1):
            g = fld.evaluate(x, t)
            ref = oracle.evaluate(x, t)
            errs.append(float(np.linalg.norm(g - ref) / max(np.linalg.norm(ref), 1e-12)))
        out["lq_equivalence"] = {"max_rel_error": max(errs), "passed": bool(max(errs) <= 1e-5)}

    out["passed"] = all(v.get("passed", v.get("verdict") == "pass")
                        for v in out.values() if isinstance(v, dict))
    return out


def bench_table(*, tol: float = DEFAULT_TOL, steps_per_unit: int = DEFAULT_STEPS,
                nodes: int = 256) -> list[dict]:
    """Solver value vs Riccati oracle vs direct transcription for each benchmark."""
    rows = []
    for name in PROBLEMS:
        spec = load(name)
        x0 = np.full(spec.dim, 1.0)
        pair, _, rep = global_solve(spec, x0, "recursive", tol, steps_per_unit=steps_per_unit)
        V = value_eval(spec, pair)
        oracle = riccati_oracle(spec)
        V_lq = oracle.value(x0, 0.0) if oracle is not None else None
        tr = direct_transcribe(spec, x0, 0.0, nodes, 1e-8, raise_on_cap=False)
        rows.append({"benchmark": name, "dim": spec.dim, "solver_value": V,
                     "riccati_value": V_lq, "transcription_value": tr.cost,
                     "transcription_nodes": nodes, "layers": len(rep.layers)})
    return rows
