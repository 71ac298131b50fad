"""Pure numpy forward RK4 sweep, same contract as the compiled kernel."""
from __future__ import annotations

import numpy as np


def _family_drift(kind: int, mat: np.ndarray, scale: float):
    if kind == 0:
        return lambda y: y @ mat.T
    def radial(y):
        r = np.sqrt(np.einsum("...i,...i->...", y, y))
        return (scale / (1.0 + r))[..., None] * y
    return radial


def rk4_forward_generic(y0: np.ndarray, gz: np.ndarray, dt: np.ndarray, drift):
    """RK4 for dy/ds = drift(y) - gz(s), batched over the leading axis of y0.

    ``drift`` maps a (B, d) array to a (B, d) array.  Returns None when the
    state leaves the finite range, mirroring the compiled kernel.
    """
    K = dt.shape[0]
    y = np.empty((K + 1,) + y0.shape)
    y[0] = y0
    cur = y0.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(K):
            h = dt[j]
            g0, g1 = gz[j], gz[j + 1]
            gm = 0.5 * (g0 + g1)
            k1 = drift(cur) - g0
            k2 = drift(cur + 0.5 * h * k1) - gm
            k3 = drift(cur + 0.5 * h * k2) - gm
            k4 = drift(cur + h * k3) - g1
            cur = cur + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            if not np.all(np.isfinite(cur)):
                return None
            y[j + 1] = cur
    return y


def rk4_forward(y0, gz, dt, kind, mat, scale):
    return rk4_forward_generic(y0, gz, dt, _family_drift(kind, mat, scale))
