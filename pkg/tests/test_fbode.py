from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decouple import benchmarks
from decouple.errors import BudgetError, ConvergenceError, DomainError
from decouple.fbode import (LayeredComposite, bellman_residual, decoupling_eval, global_solve,
                            lambda_map, picard_local, sensitivity_solve, time_grid, value_eval)
from decouple.fields import PerturbedField
from decouple.regime import Regime


@settings(max_examples=60, deadline=None)
@given(start=st.floats(0.0, 2.0), length=st.floats(0.0, 2.0),
       steps=st.sampled_from([200, 250, 1000]))
def test_time_grid_is_anchored_at_end(start, length, steps):
    end = start + length
    grid = time_grid(start, end, steps)
    assert grid[0] == start and grid[-1] == end
    assert np.all(np.diff(grid) > 0)
    if grid.shape[0] > 4:
        np.testing.assert_allclose(np.diff(grid)[1:], 1.0 / steps, rtol=1e-6)
        assert np.diff(grid)[0] <= 1.0 / steps * (1 + 1e-6)


def test_time_grid_edge_cases():
    assert time_grid(1.0, 1.0).tolist() == [1.0]
    np.testing.assert_allclose(time_grid(0.0, 0.002), np.linspace(0, 0.002, 4))
    with pytest.raises(ValueError):
        time_grid(0.0, 1.0, 16)
    with pytest.raises(DomainError):
        time_grid(1.0, 0.5)


def test_nested_intervals_share_nodes():
    outer = time_grid(0.0, 1.0)
    inner = time_grid(0.3217, 1.0)
    np.testing.assert_allclose(inner[1:], outer[outer > 0.3217 + 1e-12][-(inner.shape[0] - 1):])


def test_local_solve_matches_closed_form(scalar_spec):
    h = 0.3
    pair, rep = picard_local(scalar_spec, np.array([1.0]), 1.0 - h, tol=1e-12)
    # on [0.7, 1], Gamma(x, 0.7) = tanh(h + artanh(0.5)) x
    assert pair.z[0, 0] == pytest.approx(math.tanh(h + math.atanh(0.5)), abs=1e-7)
    assert rep.converged and rep.regime_certified
    assert all(r < 1 for r in rep.ratios)


def test_zero_state_gives_zero_trajectory(diag_spec):
    pair, _, _ = global_solve(diag_spec, np.zeros(2))
    assert not np.any(pair.y) and not np.any(pair.z) and not np.any(pair.u)


def test_iteration_cap_raises(scalar_spec):
    with pytest.raises(ConvergenceError) as info:
        picard_local(scalar_spec, np.array([1.0]), 0.6, tol=1e-14, max_iter=2)
    assert info.value.report.iterations == 2
    assert not info.value.report.converged


def test_certification_flag_for_long_interval(scalar_spec):
    _, rep = picard_local(scalar_spec, np.array([0.1]), 0.0, max_iter=400, tol=1e-6)
    assert not rep.regime_certified


def test_field_is_fixed_point_of_the_map(saturating_spec, saturating_solution):
    _, field, _ = saturating_solution
    x = np.array([0.4, -0.7])
    t = 0.3
    new, pair = lambda_map(saturating_spec, field, x, t)
    np.testing.assert_allclose(new, field.evaluate(x, t), atol=1e-6)
    assert pair.grid[0] == t and pair.grid[-1] == saturating_spec.horizon_T


def test_field_matches_terminal_gradient_at_horizon(saturating_spec, saturating_solution):
    _, field, _ = saturating_solution
    x = np.array([0.3, 2.0])
    np.testing.assert_array_equal(decoupling_eval(field, x, 0.6), saturating_spec.terminal_grad(x))
    with pytest.raises(DomainError):
        field.evaluate(x, 0.7)


def test_trajectory_is_continuous_across_layers(saturating_solution):
    pair, _, rep = saturating_solution
    assert len(rep.layers) == 2
    assert np.max(np.abs(np.diff(pair.z, axis=0))) < 5e-3
    np.testing.assert_allclose(pair.u, -pair.z, atol=0)


def test_sensitivity_against_finite_differences(saturating_spec, saturating_solution):
    _, field, _ = saturating_solution
    x, t = np.array([0.8, -0.3]), 0.05
    sens = sensitivity_solve(saturating_spec, field.trajectory(x, t))
    eps = 1e-5
    fd = np.column_stack([(field.evaluate(x + eps * e, t) - field.evaluate(x - eps * e, t))
                          / (2 * eps) for e in np.eye(2)])
    np.testing.assert_allclose(sens.jacobian, fd, atol=1e-5)
    np.testing.assert_allclose(sens.Z[0], sens.P[0])


def test_sensitivity_reduces_to_riccati(diag_spec, diag_solution):
    pair = diag_solution[0]
    sens = sensitivity_solve(diag_spec, pair)
    oracle = benchmarks.riccati_oracle(diag_spec)
    for k in (0, 300, 999):
        np.testing.assert_allclose(sens.P[k], oracle.sol.at(pair.grid[k]), atol=1e-9)


def test_value_matches_closed_form(scalar_spec, scalar_solution):
    exact = 0.5 * math.tanh(1.0 + math.atanh(0.5))
    assert value_eval(scalar_spec, scalar_solution[0]) == pytest.approx(exact, abs=1e-6)


def test_bellman_residual_detects_wrong_field(scalar_spec, scalar_solution):
    _, field, _ = scalar_solution
    x = np.array([0.7])
    assert bellman_residual(scalar_spec, field, x, 0.4) < 1e-4
    assert bellman_residual(scalar_spec, PerturbedField(field, 0.05), x, 0.4) > 1e-3
    with pytest.raises(DomainError):
        bellman_residual(scalar_spec, field, x, 0.0)


def test_evaluation_budget(scalar_spec):
    plan = Regime(scalar_spec).layer_plan()
    field = LayeredComposite(scalar_spec, plan, budget=5)
    with pytest.raises(BudgetError):
        field.evaluate(np.linspace(-1, 1, 20)[:, None], 0.0)


def test_layer_tolerances_tighten_inward(scalar_spec):
    field = LayeredComposite(scalar_spec, Regime(scalar_spec).layer_plan(), tol=1e-8)
    assert [field.layer_tol(j) for j in range(3)] == pytest.approx([1e-10, 1e-9, 1e-8])


@settings(max_examples=15, deadline=None)
@given(x=st.floats(-2.0, 2.0), t=st.floats(0.0, 0.99))
def test_scalar_field_is_linear_in_state(scalar_solution, x, t):
    _, field, _ = scalar_solution
    gain = math.tanh(1.0 - t + math.atanh(0.5))
    assert field.evaluate(np.array([x]), t)[0] == pytest.approx(gain * x, abs=1e-7)
