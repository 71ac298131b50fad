from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from decouple import benchmarks, kernels
from decouple.fbode import global_solve
from decouple.problem import LinearDrift, SaturatingDrift

needs_compiled = pytest.mark.skipif(not kernels.compiled_available(),
                                    reason="compiled kernel not built")

DRIFTS = [LinearDrift(np.array([[0.1, 0.4], [-0.3, -0.2]])), SaturatingDrift(0.25)]


def _inputs(B=3, d=2, K=200, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((B, d)), rng.standard_normal((K + 1, B, d)),
            rng.uniform(1e-3, 3e-3, K))


@needs_compiled
@pytest.mark.parametrize("drift", DRIFTS, ids=["linear", "saturating"])
def test_compiled_matches_fallback(drift):
    y0, gz, dt = _inputs()
    fast = kernels.forward_sweep(drift, y0, gz, dt, backend="compiled")
    slow = kernels.forward_sweep(drift, y0, gz, dt, backend="python")
    np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-13)


@pytest.mark.parametrize("drift", DRIFTS, ids=["linear", "saturating"])
def test_family_kernel_matches_generic_rk4(drift):
    from decouple.kernels._fallback import rk4_forward_generic
    y0, gz, dt = _inputs(seed=1)
    ref = rk4_forward_generic(y0, gz, dt, drift)
    np.testing.assert_allclose(kernels.forward_sweep(drift, y0, gz, dt), ref, atol=1e-13)


def test_custom_drift_uses_generic_path():
    y0, gz, dt = _inputs(B=1, d=2, K=50)
    cubic = lambda y: -y ** 3
    out = kernels.forward_sweep(cubic, y0, np.zeros_like(gz), dt)
    assert out.shape == (51, 1, 2)
    assert np.all(np.abs(out[-1]) <= np.abs(y0) + 1e-12)


@pytest.mark.parametrize("backend", ["python"] + (["compiled"] if kernels.compiled_available()
                                                  else []))
def test_blow_up_returns_none(backend):
    drift = LinearDrift(np.array([[800.0]]))
    out = kernels.forward_sweep(drift, np.ones((1, 1)), np.zeros((1001, 1, 1)),
                                np.full(1000, 1.0), backend=backend)
    assert out is None


def test_exact_for_constant_forcing():
    # dy/ds = -c integrates exactly under RK4
    y0 = np.array([[1.0, -2.0]])
    gz = np.broadcast_to(np.array([0.5, 1.0]), (11, 1, 2))
    out = kernels.forward_sweep(LinearDrift(np.zeros((2, 2))), y0, gz, np.full(10, 0.1))
    np.testing.assert_allclose(out[-1, 0], [0.5, -3.0], atol=1e-14)


@needs_compiled
def test_solver_agrees_across_backends():
    spec = benchmarks.load("saturating")
    a, _, _ = global_solve(spec, np.ones(2), "recursive", 1e-9, backend="compiled")
    b, _, _ = global_solve(spec, np.ones(2), "recursive", 1e-9, backend="python")
    np.testing.assert_allclose(a.z, b.z, atol=1e-11)


def test_environment_forces_fallback():
    env = dict(os.environ, DECOUPLE_BACKEND="python")
    out = subprocess.run([sys.executable, "-c",
                          "from decouple import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
