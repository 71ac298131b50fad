"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 non-convergence (or a state
leaving a field's domain), 3 regime infeasible.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import benchmarks, kernels
from .errors import BudgetError, ConvergenceError, DomainError, ProblemError, RegimeError
from .fbode import DEFAULT_STEPS, DEFAULT_TOL, global_solve, value_eval
from .io import emit_report, trajectory_table
from .mfc import (MFProblemSpec, dVdm_eval, measure_bellman_residual, mfc_solve,
                  value_from_solution)
from .problem import build_problem, load_config
from .regime import Regime

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_REGIME = 0, 1, 2, 3

log = logging.getLogger("decouple")


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()], dtype=float)
    except ValueError as exc:
        raise ProblemError(f"cannot parse vector {text!r}") from exc


def _problem(args):
    if args.config:
        return build_problem(load_config(args.config))
    if args.benchmark:
        try:
            return benchmarks.load(args.benchmark)
        except KeyError as exc:
            raise ProblemError(str(exc)) from exc
    raise ProblemError("give --config or --benchmark")


def _initial_state(args, dim: int) -> np.ndarray:
    if args.x is None:
        return np.full(dim, 1.0)
    x = _floats(args.x)
    if x.size == 1 and dim > 1:
        x = np.full(dim, x.item())
    if x.size != dim:
        raise ProblemError(f"--x has {x.size} entries, problem dimension is {dim}")
    return x


def cmd_regime(args) -> int:
    spec = _problem(args)
    report = Regime(spec).to_dict()
    emit_report(args.out_dir, "regime", {"problem": spec.name, **report})
    print(f"regime: h_max={report['h_max']} h_limit={report['h_limit']} "
          f"layers={len(report['layers'])} flags={report['flags']}")
    return EXIT_OK


def cmd_solve(args) -> int:
    spec = _problem(args)
    x = _initial_state(args, spec.dim)
    pair, fld, rep = global_solve(spec, x, args.strategy, args.tol, t=args.t,
                                  steps_per_unit=args.steps)
    V = value_eval(spec, pair)
    report = {"problem": spec.name, "x": x, "t": args.t, "strategy": args.strategy,
              "value": V, "gamma": pair.z[0], "nodes": pair.grid.shape[0],
              "report": rep.to_dict()}
    emit_report(args.out_dir, "solve", report,
                {"trajectory": trajectory_table(pair.grid, pair.y, pair.z, pair.u)})
    print(f"solve: V={V:.10g} Gamma={np.array2string(pair.z[0], precision=10)} "
          f"iterations={rep.iterations} nodes={pair.grid.shape[0]}")
    return EXIT_OK


def cmd_verify(args) -> int:
    spec = _problem(args)
    x = _initial_state(args, spec.dim) if args.x is not None else None
    result = benchmarks.verify_suite(spec, seed=args.seed, tol=args.tol,
                                     steps_per_unit=args.steps, x0=x)
    emit_report(args.out_dir, "verify", result)
    print(f"verify {spec.name}: {'PASS' if result['passed'] else 'FAIL'}")
    return EXIT_OK


def _mf_inputs(args):
    if args.config:
        cfg = load_config(args.config)
        cfg = cfg.get("mean_field", cfg)
        return benchmarks.load_mean_field(cfg)
    name = args.benchmark or "mf-scalar"
    if name not in benchmarks.MEAN_FIELD:
        raise ProblemError(f"unknown mean-field benchmark {name!r}")
    return benchmarks.load_mean_field(name)


def cmd_mfc(args) -> int:
    mf, m = _mf_inputs(args)
    sol = mfc_solve(mf, m, args.t, args.tol, steps_per_unit=args.steps)
    V = value_from_solution(mf, sol, m)
    report = {"N": m.size, "n": m.n, "t": args.t, "V": V, "flags": mf.flags,
              "Z0": sol.Z[0], "report": sol.report.to_dict()}
    T = mf.horizon_T
    if args.t + 1e-4 < T and args.t - 1e-4 >= 0:
        report["residual"] = measure_bellman_residual(mf, m, args.t, tol=args.tol,
                                                      steps_per_unit=args.steps)
    else:
        report["residual"] = None
    checks = []
    for i in range(min(m.size, args.checks)):
        r = dVdm_eval(mf, m, args.t, i, tol=args.tol, solution=sol, steps_per_unit=args.steps)
        checks.append({"index": i, "gradient": r.gradient, "fd_gradient": r.fd_gradient,
                       "rel_error": r.rel_error})
    report["gradient_checks"] = checks
    K1 = sol.grid.shape[0]
    header, rows = trajectory_table(sol.grid, sol.Y.reshape(K1, -1), sol.Z.reshape(K1, -1),
                                    sol.controls.reshape(K1, -1))
    emit_report(args.out_dir, "mfc", report, {"particles": (header, rows)})
    print(f"mfc: V={V:.10g} residual={report['residual']} particles={m.size}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.kernels:
        rows = kernel_timings(repeats=args.repeats)
        for r in rows:
            print(f"{r['case']:>24}  python {r['python_ms']:9.3f} ms  "
                  f"compiled {r['compiled_ms'] if r['compiled_ms'] is not None else float('nan'):9.3f} ms")
        return EXIT_OK
    rows = benchmarks.bench_table(tol=args.tol, steps_per_unit=args.steps)
    header = ["benchmark", "solver_value", "riccati_value", "transcription_value"]
    print("  ".join(f"{h:>20}" for h in header))
    for r in rows:
        vals = [r["benchmark"]] + [("-" if r[k] is None else f"{r[k]:.10f}") for k in header[1:]]
        print("  ".join(f"{v:>20}" for v in vals))
    emit_report(args.out_dir, "bench", {"rows": rows})
    return EXIT_OK


def kernel_timings(repeats: int = 5) -> list[dict]:
    """Forward-sweep timings for both backends on fixed random inputs."""
    from .problem import LinearDrift, SaturatingDrift

    rng = np.random.default_rng(0)
    cases = [("linear d=2 B=1", LinearDrift(np.diag([0.1, -0.2])), 2, 1),
             ("saturating d=2 B=1", SaturatingDrift(0.1), 2, 1),
             ("linear d=8 B=1", LinearDrift(np.zeros((8, 8))), 8, 1),
             ("saturating d=2 B=512", SaturatingDrift(0.1), 2, 512)]
    out = []
    for name, drift, d, B in cases:
        y0 = rng.standard_normal((B, d))
        gz = rng.standard_normal((1001, B, d))
        dt = np.full(1000, 1e-3)
        row = {"case": name, "python_ms": None, "compiled_ms": None}
        for backend in ("python", "compiled"):
            if backend == "compiled" and not kernels.compiled_available():
                continue
            best = np.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                kernels.forward_sweep(drift, y0, gz, dt, backend=backend)
                best = min(best, time.perf_counter() - t0)
            row[f"{backend}_ms"] = 1e3 * best
        out.append(row)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decouple", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="problem config file (YAML or JSON)")
    common.add_argument("--benchmark", help="named benchmark: " + ", ".join(benchmarks.names()))
    common.add_argument("--out-dir", default="out", help="directory for JSON/CSV artifacts")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="fixed-point tolerance")
    common.add_argument("--steps", type=int, default=DEFAULT_STEPS,
                        help="RK4 steps per unit time (>= 200)")
    common.add_argument("--seed", type=int, default=0, help="seed for random probes")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("regime", parents=[common], help="a priori constants and layer plan")
    sp.set_defaults(func=cmd_regime)

    sp = sub.add_parser("solve", parents=[common], help="solve from one initial state")
    sp.add_argument("--x", help="initial state, comma separated (default all ones)")
    sp.add_argument("--t", type=float, default=0.0, help="initial time")
    sp.add_argument("--strategy", choices=["recursive", "interpolated"], default="recursive",
                    help="layer terminal data: recursive evaluation or grid interpolant")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify", parents=[common], help="run the verification suite")
    sp.add_argument("--x", help="initial state for the trajectory checks")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("mfc", parents=[common], help="mean-field particle problem")
    sp.add_argument("--t", type=float, default=0.0, help="initial time")
    sp.add_argument("--checks", type=int, default=3, help="particles to gradient-check")
    sp.set_defaults(func=cmd_mfc)

    sp = sub.add_parser("bench", parents=[common],
                        help="solver vs Riccati vs transcription, or kernel timings")
    sp.add_argument("--kernels", action="store_true", help="time compiled vs numpy kernels")
    sp.add_argument("--repeats", type=int, default=5, help="timing repeats for --kernels")
    sp.set_defaults(func=cmd_bench)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.tol <= 0 or args.steps < 200:
        print("error: need --tol > 0 and --steps >= 200", file=sys.stderr)
        return EXIT_CONFIG
    try:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except (ProblemError, FileNotFoundError, yaml.YAMLError, json.JSONDecodeError,
            KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegimeError as exc:
        print(f"regime infeasible: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (ConvergenceError, BudgetError, DomainError) as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
