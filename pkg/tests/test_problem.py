from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decouple import benchmarks
from decouple.errors import ProblemError
from decouple.problem import (LinearDrift, QuadraticCost, SaturatingDrift, SamplePlan,
                              build_problem, check_assumptions, fd_hessian, gram, load_config)


def test_scalar_shorthand_builds_identity_multiples():
    spec = build_problem({"dim": 3, "drift": 0.0, "B": 2.0, "N": 4.0,
                          "running_cost": {"Q": 1.0}, "terminal_cost": {"Q": 0.5}, "T": 2})
    np.testing.assert_array_equal(spec.B, 2 * np.eye(3))
    np.testing.assert_allclose(spec.G, np.eye(3))
    assert (spec.nu, spec.M, spec.nu_T, spec.M_T) == (1.0, 1.0, 0.5, 0.5)
    assert spec.horizon_T == 2.0


def test_zero_terminal_cost_is_allowed():
    spec = build_problem({"dim": 1, "running_cost": {"Q": 1.0}, "terminal_cost": 0.0})
    assert spec.nu_T == spec.M_T == 0.0
    np.testing.assert_array_equal(spec.terminal_grad(np.array([[2.0]])), [[0.0]])


@pytest.mark.parametrize("config, message", [
    ({"dim": 1, "running_cost": {"Q": 0.0}}, "uniformly convex"),
    ({"dim": 1, "running_cost": {"Q": 1.0}, "N": 0.0}, "singular N"),
    ({"dim": 2, "running_cost": {"Q": [[1, 2], [0, 1]]}}, "symmetric"),
    ({"dim": 1, "running_cost": {"Q": 1.0}, "drift": {"family": "cubic"}}, "drift family"),
    ({"dim": 1, "running_cost": {"Q": 1.0}, "constants": {"zeta": 1}}, "unknown constant"),
    ({"dim": 2, "running_cost": {"Q": 1.0}, "terminal_cost": {"Q": [[1, 0], [0, 0]]}},
     "nu_T > 0"),
])
def test_invalid_configs_raise(config, message):
    with pytest.raises(ProblemError, match=message):
        build_problem(config)


def test_load_config_reads_yaml_and_json(tmp_path):
    cfg = benchmarks.PROBLEMS["diag-lq"]
    (tmp_path / "p.json").write_text(json.dumps(cfg))
    (tmp_path / "p.yaml").write_text("dim: 1\nrunning_cost: {Q: 2.0}\nterminal_cost: {Q: 1.0}\n")
    assert load_config(tmp_path / "p.json") == cfg
    assert build_problem(load_config(tmp_path / "p.yaml")).M == 2.0
    (tmp_path / "bad.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ProblemError):
        load_config(tmp_path / "bad.yaml")


def test_gram_reports_missing_coercivity():
    g = gram(np.array([[1.0], [0.0]]), np.array([[2.0]]))
    np.testing.assert_allclose(g.G, [[0.5, 0.0], [0.0, 0.0]])
    assert g.m_coer == 0.0 and g.g_norm == 0.5
    assert g.status == "coercivity fails"
    with pytest.raises(ProblemError):
        gram(np.eye(2), np.zeros((2, 2)))


def test_saturating_constants_against_dense_grid():
    # independent oracle: brute-force Jacobian norms and weighted Lipschitz
    # ratios on a dense planar grid
    drift = SaturatingDrift(0.3)
    axis = np.linspace(-3, 3, 121)
    pts = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
    norms = np.linalg.norm(drift.jacobian(pts), ord=2, axis=(-2, -1))
    assert norms.max() == pytest.approx(0.3, abs=1e-12)
    rng = np.random.default_rng(0)
    x1 = pts[rng.integers(len(pts), size=4000)]
    x2 = x1 + 1e-3 * rng.standard_normal(x1.shape)
    dJ = np.linalg.norm(drift.jacobian(x1) - drift.jacobian(x2), ord=2, axis=(-2, -1))
    w = 1 + np.maximum(np.linalg.norm(x1, axis=1), np.linalg.norm(x2, axis=1))
    assert (dJ * w / np.linalg.norm(x1 - x2, axis=1)).max() <= 0.6

    spec = benchmarks.load("saturating")
    report = check_assumptions(spec, pts)
    assert report.passed, report.to_dict()


def test_audit_flags_understated_constants():
    cfg = dict(benchmarks.PROBLEMS["saturating"], constants={"gamma": 0.05, "M": 1.0})
    report = check_assumptions(build_problem(cfg), SamplePlan(count=32))
    assert not report["drift_jacobian_bound"].passed
    assert not report["running_hessian"].passed
    assert report["coercivity"].passed


@pytest.mark.parametrize("name", list(benchmarks.PROBLEMS))
def test_benchmarks_pass_audit(name):
    assert check_assumptions(benchmarks.load(name)).passed


def test_linear_drift_jacobian_and_second_action():
    A = np.array([[0.0, 1.0], [-2.0, 0.3]])
    drift = LinearDrift(A)
    x = np.array([[1.0, 2.0], [0.5, -1.0]])
    np.testing.assert_allclose(drift(x), x @ A.T)
    np.testing.assert_array_equal(drift.jacobian(x)[1], A)
    assert not np.any(drift.second_derivative_action(x, x))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.floats(0.0, 2.0))
def test_cost_hessian_matches_finite_differences(x, weight):
    cost = QuadraticCost(np.array([[2.0, 0.5], [0.5, 1.0]]), weight)
    x = np.array(x)
    np.testing.assert_allclose(fd_hessian(cost.gradient, x), cost.hessian(x), atol=1e-6)
    lo, hi = cost.spectrum_bounds
    ev = np.linalg.eigvalsh(cost.hessian(x))
    assert lo - 1e-12 <= ev[0] and ev[-1] <= hi + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_saturating_jacobian_matches_finite_differences(x):
    drift = SaturatingDrift(-0.7)
    x = np.array(x)
    eps = 1e-6
    fd = np.column_stack([(drift(x + eps * e) - drift(x - eps * e)) / (2 * eps)
                          for e in np.eye(3)])
    # |x| has a kink at the origin, so the one-sided error there is O(eps)
    np.testing.assert_allclose(drift.jacobian(x), fd, atol=1e-5)
