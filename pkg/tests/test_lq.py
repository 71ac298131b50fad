from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from decouple.errors import DomainError
from decouple.lq import LQField, mf_lq_solve, riccati_solve, scalar_riccati


def test_scalar_benchmark_closed_form():
    sol = riccati_solve(0.0, 1.0, 0.5, 1.0, (0.0, 1.0))
    for t in (0.0, 0.25, 0.8, 1.0):
        assert sol.at(t)[0, 0] == pytest.approx(math.tanh(1 - t + math.atanh(0.5)), abs=1e-13)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-1.0, 1.0), m=st.floats(0.0, 2.0), g=st.floats(0.0, 2.0),
       q_T=st.floats(0.0, 3.0), tau=st.floats(0.0, 1.0))
def test_scalar_closed_form_against_ode(a, m, g, q_T, tau):
    exact = float(scalar_riccati(a, m, g, q_T, tau))
    ode = solve_ivp(lambda s, p: 2 * a * p - g * p * p + m, (0.0, tau), [q_T],
                    method="DOP853", rtol=1e-12, atol=1e-12).y[0, -1]
    assert exact == pytest.approx(ode, rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("q_T", [0.2, 1.0, 3.0])
def test_rk4_matches_all_closed_form_branches(q_T):
    # r = 1 here, so q_T selects the tanh, constant and coth branches
    sol = riccati_solve(0.0, 1.0, q_T, 1.0, (0.0, 1.0))
    ref = scalar_riccati(0.0, 1.0, 1.0, q_T, 1.0 - sol.grid)
    np.testing.assert_allclose(sol.P[:, 0, 0], ref, atol=1e-12)


def test_matrix_solution_is_symmetric_and_solves_equation():
    rng = np.random.default_rng(2)
    A = 0.3 * rng.standard_normal((3, 3))
    L = rng.standard_normal((3, 3))
    M = L @ L.T + np.eye(3)
    sol = riccati_solve(A, M, 0.5 * np.eye(3), np.eye(3), (0.0, 1.0))
    assert np.allclose(sol.P, np.swapaxes(sol.P, 1, 2))

    def rhs(s, p):
        P = p.reshape(3, 3)
        return (-(P @ A + A.T @ P - P @ P + M)).ravel()

    ode = solve_ivp(rhs, (1.0, 0.0), (0.5 * np.eye(3)).ravel(), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(sol.at(0.0), ode.y[:, -1].reshape(3, 3), atol=1e-10)


def test_blow_up_is_reported():
    with pytest.raises(DomainError, match="blows up"):
        riccati_solve(0.0, 1.0, 1.0, -1.0, (0.0, 3.0))


def test_out_of_range_time():
    sol = riccati_solve(0.0, 1.0, 0.5, 1.0, (0.2, 1.0))
    with pytest.raises(DomainError):
        sol.at(0.1)


def test_lq_field_value_and_gradient():
    sol = riccati_solve(np.diag([0.1, -0.2]), np.eye(2), 0.5 * np.eye(2), np.eye(2), (0.0, 1.0))
    f = LQField(sol)
    x = np.array([1.0, -2.0])
    P = sol.at(0.3)
    np.testing.assert_allclose(f.evaluate(x, 0.3), P @ x)
    assert f.value(x, 0.3) == pytest.approx(0.5 * x @ P @ x)
    with pytest.raises(ValueError):
        f.trajectory(x)


def test_mean_field_pair_values():
    dev, mean = mf_lq_solve(1, 0.0, 1.0, 1.0, 1.0, 0.5, 0.0, (0.0, 1.0))
    assert dev.at(0.0)[0, 0] == pytest.approx(math.tanh(1.0), abs=1e-13)
    # mean weight (1 - s)^2 = 1/4: P' = P^2 - 1/4, P(1) = 0
    assert mean.at(0.0)[0, 0] == pytest.approx(0.5 * math.tanh(0.5), abs=1e-13)


def test_mean_field_pair_reduces_when_uncoupled():
    dev, mean = mf_lq_solve(2, np.diag([0.1, 0.2]), 1.0, 1.0, np.eye(2), 0.0, 0.3, (0.0, 1.0))
    np.testing.assert_allclose(dev.P, mean.P)
