import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invbandit.linalg import make_rng
from invbandit.qpsolve import (KktReport, QpSettings, QpSolution, QpStatus,
                               check_kkt, solve_minnorm)
from oracles import active_set_minnorm

TIGHT = QpSettings(eps_abs=1e-5, eps_rel=1e-5, fallback_eps=1e-3)


def feasible_system(rng, rows, dim, zero_slack_frac=0.3):
    """Random system guaranteed feasible: u = A x0 + slack, some slacks zero."""
    a = rng.standard_normal((rows, dim))
    x0 = rng.standard_normal(dim)
    slack = rng.uniform(0.0, 2.0, size=rows)
    slack[rng.random(rows) < zero_slack_frac] = 0.0
    return a, a @ x0 + slack


class TestSmallOracles:
    def test_empty_system_returns_origin(self):
        sol = solve_minnorm(np.zeros((0, 3)), np.zeros(0))
        assert sol.status is QpStatus.SOLVED
        assert sol.theta_hat == pytest.approx([0.0, 0.0, 0.0])
        assert sol.iterations == 0
        assert sol.objective == 0.0

    def test_inactive_constraint_gives_origin(self):
        sol = solve_minnorm([[1.0, 0.0]], [1.0], TIGHT)
        assert sol.status is QpStatus.SOLVED
        assert np.abs(sol.theta_hat).max() <= 1e-3

    def test_single_active_halfspace(self):
        # -theta <= -1  <=>  theta >= 1; nearest point to origin is 1
        sol = solve_minnorm([[-1.0]], [-1.0], TIGHT)
        assert sol.status is QpStatus.SOLVED
        assert sol.theta_hat[0] == pytest.approx(1.0, abs=1e-3)
        assert sol.objective == pytest.approx(0.5, abs=1e-3)

    def test_two_active_halfspaces(self):
        a = [[-1.0, 0.0], [0.0, -1.0]]
        sol = solve_minnorm(a, [-1.0, -1.0], TIGHT)
        assert sol.theta_hat == pytest.approx([1.0, 1.0], abs=1e-3)

    def test_zero_row_with_nonnegative_bound_is_vacuous(self):
        a = [[0.0, 0.0], [-1.0, 0.0]]
        sol = solve_minnorm(a, [0.0, -1.0], TIGHT)
        assert sol.status is QpStatus.SOLVED
        assert sol.theta_hat == pytest.approx([1.0, 0.0], abs=1e-3)

    def test_duals_zero_on_slack_rows(self):
        a = np.array([[-1.0, 0.0], [1.0, 0.0]])
        sol = solve_minnorm(a, np.array([-1.0, 5.0]), TIGHT)
        assert sol.duals[0] == pytest.approx(1.0, abs=1e-2)
        assert sol.duals[1] == pytest.approx(0.0, abs=1e-2)


class TestAgainstBruteForce:
    @pytest.mark.parametrize("seed", range(12))
    def test_matches_active_set_enumeration(self, seed):
        rng = make_rng(seed, "qp-oracle")
        rows = int(rng.integers(1, 7))
        dim = int(rng.integers(1, 4))
        a, u = feasible_system(rng, rows, dim)
        ref = active_set_minnorm(a, u)
        assert ref is not None
        x_ref, obj_ref = ref
        sol = solve_minnorm(a, u, TIGHT)
        assert sol.status is QpStatus.SOLVED
        assert sol.objective <= obj_ref + 1e-3 * (1.0 + obj_ref)
        assert np.abs(sol.theta_hat - x_ref).max() <= 1e-2 * (1.0 + np.abs(x_ref).max())

    def test_row_scaling_invariance(self):
        rng = make_rng(77, "qp-scale")
        a, u = feasible_system(rng, 8, 3)
        base = solve_minnorm(a, u, TIGHT).theta_hat
        scale = np.array([1e3, 1.0, 1e-3, 1.0, 50.0, 1.0, 1.0, 2e2])
        scaled = solve_minnorm(a * scale[:, None], u * scale, TIGHT).theta_hat
        assert np.abs(base - scaled).max() <= 1e-2 * (1.0 + np.abs(base).max())


class TestFeasibilityProperty:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6))
    def test_solved_means_feasible_per_unit_norm_row(self, seed):
        rng = make_rng(seed, "qp-prop")
        rows = int(rng.integers(1, 30))
        dim = int(rng.integers(1, 6))
        a, u = feasible_system(rng, rows, dim)
        sol = solve_minnorm(a, u)
        report = check_kkt(a, u, sol)
        if sol.status is QpStatus.SOLVED:
            u_scale = 1.0 + np.abs(u / np.abs(a).max(axis=1)).max()
            assert report.max_violation <= QpSettings().eps_abs * u_scale + 1e-12
        assert report.max_violation == pytest.approx(sol.max_violation, abs=1e-9)


class TestInfeasibleSystems:
    def test_contradictory_rows_fall_back_to_penalty(self):
        # theta <= -1 and -theta <= -1 cannot both hold
        a = np.array([[1.0], [-1.0]])
        sol = solve_minnorm(a, np.array([-1.0, -1.0]))
        assert sol.status in (QpStatus.PENALTY_FALLBACK, QpStatus.FAILED)
        assert sol.max_violation > 0.0

    def test_penalty_iterate_matches_analytic_compromise(self):
        # symmetric infeasible pair: penalty optimum stays at the midpoint 0
        a = np.array([[1.0], [-1.0]])
        sol = solve_minnorm(a, np.array([-1.0, -1.0]))
        assert abs(sol.theta_hat[0]) <= 0.05


class TestKktReport:
    def test_stationarity_small_on_solved_system(self):
        rng = make_rng(5, "qp-kkt")
        a, u = feasible_system(rng, 10, 3)
        sol = solve_minnorm(a, u, TIGHT)
        report = check_kkt(a, u, sol)
        assert isinstance(report, KktReport)
        assert report.stationarity_residual <= 1e-2 * (1.0 + np.abs(sol.theta_hat).max())
        assert report.complementarity_gap <= 1e-2

    def test_empty_system_report(self):
        sol = solve_minnorm(np.zeros((0, 2)), np.zeros(0))
        report = check_kkt(np.zeros((0, 2)), np.zeros(0), sol)
        assert report.max_violation == 0.0
        assert report.stationarity_residual == 0.0


class TestValidation:
    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError, match="2-D"):
            solve_minnorm(np.zeros(3), np.zeros(3))
        with pytest.raises(ValueError, match="bound vector"):
            solve_minnorm(np.zeros((2, 2)), np.zeros(3))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="non-finite"):
            solve_minnorm([[np.nan]], [0.0])

    def test_rejects_zero_columns(self):
        with pytest.raises(ValueError, match="column"):
            solve_minnorm(np.zeros((2, 0)), np.zeros(2))

    def test_settings_validation(self):
        with pytest.raises(ValueError, match="positive"):
            QpSettings(eps_abs=0.0)
        with pytest.raises(ValueError, match="fallback_eps"):
            QpSettings(eps_abs=0.5, fallback_eps=0.1)
        with pytest.raises(ValueError, match="relax"):
            QpSettings(relax=2.5)


def test_solution_repr_hides_dual_vector():
    sol = solve_minnorm([[-1.0]], [-1.0], TIGHT)
    assert isinstance(sol, QpSolution)
    assert "duals" not in repr(sol)
