"""Decoupling-field solver for deterministic optimal control and mean-field control."""
from importlib.metadata import PackageNotFoundError, version as _version

from .benchmarks import load as load_benchmark
from .fbode import global_solve, picard_local, sensitivity_solve, value_eval
from .lq import riccati_solve
from .mfc import MFProblemSpec, ParticleMeasure, mfc_solve
from .problem import ProblemSpec, build_problem, check_assumptions
from .regime import Regime

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "MFProblemSpec",
    "ParticleMeasure",
    "ProblemSpec",
    "Regime",
    "build_problem",
    "check_assumptions",
    "global_solve",
    "load_benchmark",
    "mfc_solve",
    "picard_local",
    "riccati_solve",
    "sensitivity_solve",
    "value_eval",
]
