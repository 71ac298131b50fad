from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from decouple.errors import DomainError, ProblemError
from decouple.mfc import (LiftedState, MFProblemSpec, ParticleMeasure, continuity_diagnostic,
                          dVdm_eval, lift_problem, lifted_cost, measure_bellman_residual,
                          mfc_solve, particle_gradient, pushforward, pushforward_map,
                          value_measure, w2_empirical)


@pytest.fixture(scope="module")
def mf_solution(mean_field):
    mf, m = mean_field
    return mfc_solve(mf, m, 0.0, 1e-8)


def test_measure_basics():
    m = ParticleMeasure(np.array([3.0, -1.0, 1.0]))
    assert (m.size, m.n) == (3, 1)
    assert m.mean[0] == pytest.approx(1.0)
    assert m.second_moment == pytest.approx(11 / 3)
    assert m.same_points(ParticleMeasure(np.array([1.0, 3.0, -1.0])))
    assert not m.same_points(ParticleMeasure(np.array([1.0, 3.0, -1.5])))
    with pytest.raises(ProblemError):
        ParticleMeasure(np.empty((0, 1)))
    with pytest.raises(ProblemError):
        ParticleMeasure(np.array([np.nan]))


def test_lifting_round_trip():
    m = ParticleMeasure(np.array([[0.0, 1.0], [2.0, -1.0]]))
    X = LiftedState.identity(m)
    assert pushforward(X).same_points(m)
    assert X.norm == pytest.approx(math.sqrt(m.second_moment))
    shifted = pushforward_map(lambda p: p + 1.0, m)
    np.testing.assert_allclose(shifted.mean, m.mean + 1.0)


def test_lifted_running_cost_matches_functional(mean_field):
    mf, m = mean_field
    spec = lift_problem(mf, m)
    x_scaled = m.points.reshape(-1) / math.sqrt(m.size)
    assert float(spec.cost_running(x_scaled)) == pytest.approx(lifted_cost(mf, m.points),
                                                               abs=1e-14)
    ev = np.linalg.eigvalsh(spec.cost_running.Q)
    assert spec.nu <= ev[0] + 1e-12 and ev[-1] <= spec.M + 1e-12


def test_particle_gradient_is_scaled_lifted_gradient():
    # independent check: N times the finite-difference gradient of F(X (x) m)
    mf = MFProblemSpec(n=2, A=0.0, B=1.0, N_weight=1.0, Q=[[2.0, 0.3], [0.3, 1.0]], s=0.4,
                       Q_T=0.0, s_T=0.0, horizon_T=1.0)
    pts = np.random.default_rng(4).standard_normal((5, 2))
    grad = particle_gradient(mf, pts)
    eps = 1e-6
    for i in range(5):
        for k in range(2):
            p, q = pts.copy(), pts.copy()
            p[i, k] += eps
            q[i, k] -= eps
            fd = 5 * (mf.running_functional(p) - mf.running_functional(q)) / (2 * eps)
            assert grad[i, k] == pytest.approx(fd, abs=1e-7)


def test_solution_matches_riccati_pair(mean_field, mf_solution):
    _, m = mean_field
    np.testing.assert_allclose(mf_solution.Z[0, :, 0], math.tanh(1.0) * m.points[:, 0],
                               atol=1e-6)
    np.testing.assert_allclose(mf_solution.controls, -mf_solution.Z)


def test_permutation_invariance_is_exact(mean_field, mf_solution):
    mf, m = mean_field
    perm = np.array([3, 0, 7, 5, 1, 6, 2, 4])
    other = mfc_solve(mf, ParticleMeasure(m.points[perm]), 0.0, 1e-8)
    assert np.array_equal(other.Z, mf_solution.Z[:, perm, :])
    assert value_measure(mf, m) == value_measure(mf, ParticleMeasure(m.points[perm]))


def test_functional_derivative_gradient(mean_field, mf_solution):
    mf, m = mean_field
    r = dVdm_eval(mf, m, 0.0, 2, solution=mf_solution)
    assert r.rel_error < 1e-5
    np.testing.assert_allclose(r.gradient, mf_solution.Z[0, 2])


def test_measure_bellman_residual_is_sensitive(mean_field):
    mf, m = mean_field
    assert measure_bellman_residual(mf, m, 0.5) < 1e-4
    assert measure_bellman_residual(mf, m, 0.5, gradient_shift=0.1) > 1e-3
    with pytest.raises(DomainError):
        measure_bellman_residual(mf, m, 1.0)


def test_single_particle_reduces_to_scalar_problem():
    mf = MFProblemSpec(n=1, A=0.0, B=1.0, N_weight=1.0, Q=1.0, s=0.0, Q_T=0.5, s_T=0.0,
                       horizon_T=1.0)
    sol = mfc_solve(mf, ParticleMeasure(np.array([1.0])), 0.0, 1e-9)
    assert sol.Z[0, 0, 0] == pytest.approx(math.tanh(1 + math.atanh(0.5)), abs=1e-7)


def test_invalid_inputs():
    with pytest.raises(ProblemError):
        MFProblemSpec(n=1, A=0.0, B=1.0, N_weight=1.0, Q=0.0, s=0.0, Q_T=0.0, s_T=0.0,
                      horizon_T=1.0)
    mf = MFProblemSpec(n=1, A=0.0, B=1.0, N_weight=1.0, Q=1.0, s=1.0, Q_T=0.0, s_T=0.0,
                       horizon_T=1.0)
    with pytest.raises(ProblemError, match="strictly convex"):
        lift_problem(mf, ParticleMeasure(np.array([0.0, 1.0])))
    with pytest.raises(ProblemError):
        lift_problem(mf, ParticleMeasure(np.zeros((2, 2))))


def test_flags(mean_field):
    mf, _ = mean_field
    assert mf.flags == {"coercive": True, "drift_bounded": True, "separable_cost": False}


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=2, max_size=6),
       st.integers(0, 1000))
def test_w2_against_brute_force_assignment(rows, seed):
    a = np.array(rows)
    b = a[::-1] + np.random.default_rng(seed).normal(0, 0.5, a.shape)
    ma, mb = ParticleMeasure(a), ParticleMeasure(b)
    cost = ((a[:, None] - b[None]) ** 2).sum(-1)
    r, c = linear_sum_assignment(cost)
    assert w2_empirical(ma, mb) == pytest.approx(math.sqrt(cost[r, c].mean()), abs=1e-12)
    assert w2_empirical(ma, mb) == pytest.approx(w2_empirical(mb, ma), abs=1e-12)
    assert w2_empirical(ma, ma) == 0.0


def test_w2_one_dimensional_sorting():
    a = ParticleMeasure(np.array([0.0, 1.0, 2.0]))
    b = ParticleMeasure(np.array([2.5, 0.5, 1.5]))
    assert w2_empirical(a, b) == pytest.approx(0.5)
    with pytest.raises(ProblemError):
        w2_empirical(a, ParticleMeasure(np.array([1.0])))


def test_continuity_diagnostic_runs(mean_field):
    mf, m = mean_field
    out = continuity_diagnostic(mf, m, pairs=2, steps_per_unit=200, tol=1e-6)
    assert out["pairs"] == 2 and out["fitted_constant"] > 0
