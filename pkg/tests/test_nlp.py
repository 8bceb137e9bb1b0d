import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import double_integrator
from exosim.nlp import (FunctionNlp, QpError, SolverSettings, constraint_violation, kkt_residual,
                        qp_solve, regularize, solve_sqp)
from exosim.nlp.sqp import _bfgs_update
from exosim.ocp import transcribe


def bounded_square(lower=1.0):
    """min x^2 subject to x >= lower, written as a general inequality."""
    return FunctionNlp(1, lambda z: z[0] ** 2, ineq=lambda z: z[:1], n_in=1, in_lower=[lower],
                       gradient=lambda z: 2 * z, ineq_jacobian=lambda z: np.ones((1, 1)))


def test_active_inequality():
    sol = solve_sqp(bounded_square(), [3.0])
    assert sol.converged and sol.iterations <= 15
    assert sol.point[0] == pytest.approx(1.0, abs=1e-8)
    assert sol.multipliers["ineq"][0] == pytest.approx(2.0, abs=1e-6)


def test_start_at_optimum_stops_immediately():
    sol = solve_sqp(bounded_square(), [1.0])
    assert sol.converged and sol.iterations <= 2


def test_active_variable_bound_multiplier():
    nlp = FunctionNlp(1, lambda z: z[0] ** 2, lower=[1.0], gradient=lambda z: 2 * z)
    sol = solve_sqp(nlp, [4.0])
    assert sol.converged
    assert sol.multipliers["bounds"][0] == pytest.approx(2.0, abs=1e-6)


def test_equality_constrained_quadratic():
    # min x^2 + y^2 s.t. x + y = 1
    nlp = FunctionNlp(2, lambda z: z @ z, eq=lambda z: [z[0] + z[1] - 1.0], n_eq=1,
                      gradient=lambda z: 2 * z, eq_jacobian=lambda z: np.ones((1, 2)))
    sol = solve_sqp(nlp, [3.0, -1.0])
    assert sol.converged
    assert np.allclose(sol.point, 0.5, atol=1e-8)
    assert sol.multipliers["eq"][0] == pytest.approx(1.0, abs=1e-6)


def test_rosenbrock_with_finite_differences():
    nlp = FunctionNlp(2, lambda z: (1 - z[0]) ** 2 + 100 * (z[1] - z[0] ** 2) ** 2)
    sol = solve_sqp(nlp, [-1.2, 1.0], SolverSettings(kkt_tol=1e-5, max_iterations=300))
    assert sol.converged
    assert np.allclose(sol.point, 1.0, atol=1e-3)


# -- transcribed problems -----------------------------------------------------

def _min_time(interpolation):
    nlp = transcribe(double_integrator(interpolation))
    z0 = nlp.initial_guess(controls=0.0, durations=[3.0])
    return nlp, solve_sqp(nlp, z0)


def test_min_time_double_integrator():
    nlp, sol = _min_time("constant")
    assert sol.converged and sol.kkt_residual < 1e-6
    assert nlp.durations(sol.point)[0] == pytest.approx(2.0, abs=1e-3)


def test_min_time_with_linear_controls():
    # node-anchored linear controls cannot switch inside an interval, so the
    # discrete optimum sits slightly above the bang-bang time
    nlp, sol = _min_time("linear")
    assert sol.converged
    assert nlp.durations(sol.point)[0] == pytest.approx(2.0033417, abs=1e-5)


def test_merit_never_increases():
    _, sol = _min_time("constant")
    assert sol.merit_history
    for before, after in sol.merit_history:
        assert after <= before + 1e-12


def test_solver_is_deterministic():
    a = _min_time("constant")[1]
    b = _min_time("constant")[1]
    assert np.array_equal(a.point, b.point) and a.iterations == b.iterations


def test_iteration_cap_reports_status():
    nlp = transcribe(double_integrator())
    sol = solve_sqp(nlp, nlp.initial_guess(controls=0.0, durations=[3.0]), SolverSettings(max_iterations=1))
    assert sol.status == "max_iter" and sol.iterations == 1


def test_clipped_start_is_flagged():
    sol = solve_sqp(FunctionNlp(1, lambda z: z[0] ** 2, lower=[1.0]), [-5.0])
    assert sol.clipped_start and sol.converged


def test_bad_starting_point_rejected():
    with pytest.raises(ValueError):
        solve_sqp(bounded_square(), [np.nan])
    with pytest.raises(ValueError):
        solve_sqp(bounded_square(), [1.0, 2.0])


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(kkt_tol=0.0)
    with pytest.raises(ValueError):
        SolverSettings(hessian="exact")
    with pytest.raises(ValueError):
        SolverSettings(max_iterations=-1)


# -- KKT residual ----------------------------------------------------------------

def test_kkt_residual_vanishes_at_kkt_pair():
    nlp = bounded_square()
    mult = {"eq": np.zeros(0), "ineq": np.array([2.0]), "bounds": np.zeros(1)}
    assert kkt_residual(nlp, [1.0], mult) < 1e-12


def test_kkt_residual_without_multipliers_reports_stationarity():
    nlp = bounded_square()
    assert kkt_residual(nlp, [1.0], {}) == pytest.approx(2.0)


def test_kkt_residual_grows_linearly_off_the_solution():
    nlp = bounded_square()
    mult = {"ineq": np.array([2.0])}
    r = [kkt_residual(nlp, [1.0 + d], mult) for d in (1e-2, 1e-3, 1e-4)]
    assert r[0] / r[1] == pytest.approx(10.0, rel=1e-6)
    assert r[1] / r[2] == pytest.approx(10.0, rel=1e-6)


def test_constraint_violation_counts_everything():
    nlp = FunctionNlp(2, lambda z: 0.0, eq=lambda z: [z[0]], n_eq=1, ineq=lambda z: [z[1]], n_in=1,
                      in_upper=[1.0], lower=[-np.inf, 0.0])
    assert constraint_violation(nlp, np.array([0.3, 1.5])) == pytest.approx(0.5)
    assert constraint_violation(nlp, np.array([0.0, -2.0])) == pytest.approx(2.0)


# -- QP subproblem ----------------------------------------------------------------

def test_qp_projection_onto_line():
    r = qp_solve(np.eye(2), np.zeros(2), A_eq=np.ones((1, 2)), b_eq=[1.0])
    assert np.allclose(r.step, 0.5, atol=1e-12)
    assert r.lam_eq[0] == pytest.approx(0.5, abs=1e-12)


def test_qp_unconstrained_newton_step(rng):
    A = rng.normal(size=(4, 4))
    H = A @ A.T + np.eye(4)
    g = rng.normal(size=4)
    assert np.allclose(qp_solve(H, g).step, -np.linalg.solve(H, g), atol=1e-10)


def test_qp_active_bound_has_positive_multiplier():
    r = qp_solve(np.eye(1), [-3.0], bounds=([-1.0], [1.0]))
    assert r.step[0] == pytest.approx(1.0)
    assert r.nu_bounds[0] == pytest.approx(-2.0)   # upper side is negative
    r = qp_solve(np.eye(1), [3.0], bounds=([-1.0], [1.0]))
    assert r.nu_bounds[0] == pytest.approx(2.0)


def test_qp_fixed_components_are_eliminated():
    r = qp_solve(np.eye(2), [1.0, 1.0], bounds=([0.5, -np.inf], [0.5, np.inf]))
    assert r.step[0] == 0.5 and r.step[1] == pytest.approx(-1.0)
    assert r.nu_bounds[0] == pytest.approx(1.5)


def test_qp_inconsistent_constraints_use_elastic_mode():
    A = np.array([[1.0], [1.0]])
    r = qp_solve(np.eye(1), [0.0], A_eq=A, b_eq=[0.0, 1.0])
    assert r.elastic
    assert 0.0 <= r.step[0] <= 1.0
    with pytest.raises(QpError):
        qp_solve(np.eye(1), [0.0], A_eq=A, b_eq=[0.0, 1.0], elastic=False)


def test_regularize_lifts_smallest_eigenvalue():
    H = regularize(np.diag([-1.0, 2.0]), min_eig=1e-3)
    assert np.linalg.eigvalsh(H)[0] == pytest.approx(1e-3)


@given(st.integers(0, 2**32 - 1))
def test_bfgs_update_stays_positive_definite(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    B = np.eye(n)
    for _ in range(10):
        B = _bfgs_update(B, rng.normal(size=n), rng.normal(size=n))
        assert np.allclose(B, B.T, atol=1e-12)
        assert np.linalg.eigvalsh(B)[0] > 0
