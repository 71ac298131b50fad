"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled module is used when it imports and the drift belongs to a
built-in family.  Setting ``DECOUPLE_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _fallback
from ..problem import LinearDrift, SaturatingDrift

_compiled = None
if os.environ.get("DECOUPLE_BACKEND", "").lower() != "python":
    try:
        from . import _sweep as _compiled  # type: ignore[no-redef]
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"

__all__ = ["BACKEND", "family_params", "forward_sweep", "compiled_available"]


def compiled_available() -> bool:
    return _compiled is not None


def family_params(drift):
    """(kind, matrix, scale) for built-in drifts, else None."""
    if isinstance(drift, LinearDrift):
        m = np.ascontiguousarray(drift.matrix, dtype=float)
        return 0, m, 0.0
    if isinstance(drift, SaturatingDrift):
        return 1, np.zeros((1, 1)), float(drift.scale)
    return None


def forward_sweep(drift, y0: np.ndarray, gz: np.ndarray, dt: np.ndarray, *,
                  backend: str | None = None):
    """Forward RK4 of dy/ds = A(y) - (G z)(s) on a batch of trajectories.

    Parameters
    ----------
    drift : drift object of the problem.
    y0 : (B, d) initial states.
    gz : (K+1, B, d) node values of G z, linearly interpolated in between.
    dt : (K,) step lengths.
    backend : "compiled", "python" or None for the import-time default.

    Returns
    -------
    ndarray of shape (K+1, B, d), or None on a nonfinite state.
    """
    use = backend or BACKEND
    params = family_params(drift)
    y0 = np.ascontiguousarray(y0, dtype=float)
    gz = np.ascontiguousarray(gz, dtype=float)
    dt = np.ascontiguousarray(dt, dtype=float)
    if params is None:
        return _fallback.rk4_forward_generic(y0, gz, dt, drift)
    if use == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel not built")
        return _compiled.rk4_forward(y0, gz, dt, *params)
    return _fallback.rk4_forward(y0, gz, dt, *params)
