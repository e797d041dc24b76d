import numpy as np
import pytest
import scipy.linalg as sla

from sgsadmm import subsolve
from sgsadmm.errors import IndefiniteOperatorError
from sgsadmm.subsolve import (
    NormalEquationSolver,
    build_truncated_prox,
    pcg_solve,
    solve_normal_equations,
)


def random_spd(rng, n, shift=0.5):
    G = rng.standard_normal((n, n))
    return G @ G.T / n + shift * np.eye(n)


class TestTruncatedProx:
    def test_diag_example_spectrum(self):
        V = np.diag([4.0, 2.0, 1.0])
        prox = build_truncated_prox(V, 1, 1.0)
        shifted = np.column_stack([prox.apply_shifted(e) for e in np.eye(3)])
        lam = np.sort(sla.eigvalsh(shifted))
        assert np.allclose(lam, [2.0, 2.0, 4.0])
        # inverse scales the top eigenvector by 1/4, everything else by 1/2
        assert np.allclose(prox.apply_inverse(np.array([1.0, 0.0, 0.0])), [0.25, 0.0, 0.0])
        assert np.allclose(prox.apply_inverse(np.array([0.0, 1.0, 1.0])), [0.0, 0.5, 0.5])

    def test_full_rank_keeps_everything(self):
        rng = np.random.default_rng(0)
        V = random_spd(rng, 5)
        prox = build_truncated_prox(V, 4, 2.0)
        x = rng.standard_normal(5)
        assert np.allclose(prox.apply_T(x), 0.0, atol=1e-10)
        assert np.allclose(prox.apply_inverse(x), np.linalg.solve(2.0 * V, x))

    def test_inverse_consistency(self):
        rng = np.random.default_rng(1)
        V = random_spd(rng, 8)
        prox = build_truncated_prox(V, 2, 1.3)
        for _ in range(10):
            x = rng.standard_normal(8)
            assert np.allclose(prox.apply_inverse(prox.apply_shifted(x)), x, atol=1e-10)

    def test_shifted_equals_sigmaV_plus_T(self):
        rng = np.random.default_rng(2)
        V = random_spd(rng, 6)
        sigma = 0.7
        prox = build_truncated_prox(V, 3, sigma)
        x = rng.standard_normal(6)
        assert np.allclose(prox.apply_shifted(x), sigma * (V @ x) + prox.apply_T(x), atol=1e-10)

    def test_T_is_psd_and_floor_holds(self):
        rng = np.random.default_rng(3)
        V = random_spd(rng, 7)
        sigma = 1.1
        prox = build_truncated_prox(V, 2, sigma)
        floor = sigma * prox.lam_cut
        for _ in range(20):
            x = rng.standard_normal(7)
            assert x @ prox.apply_T(x) >= -1e-10 * (x @ x)
            assert x @ prox.apply_shifted(x) >= floor * (x @ x) - 1e-10

    def test_nonpositive_cut_rejected(self):
        V = np.diag([1.0, 0.0])
        with pytest.raises(IndefiniteOperatorError):
            build_truncated_prox(V, 1, 1.0)


class TestPcg:
    def test_identity_converges_immediately(self):
        rhs = np.array([1.0, -2.0, 3.0])
        x, stats = pcg_solve(np.eye(3), rhs)
        assert np.allclose(x, rhs)
        assert stats.converged
        assert stats.iterations <= 1

    def test_two_cluster_spectrum(self):
        V = np.diag([4.0, 2.0, 1.0])
        prox = build_truncated_prox(V, 1, 1.0)
        shifted = np.column_stack([prox.apply_shifted(e) for e in np.eye(3)])
        rng = np.random.default_rng(4)
        rhs = rng.standard_normal(3)
        x, stats = pcg_solve(shifted, rhs, tol=1e-12)
        assert stats.converged and stats.iterations <= 2
        assert np.allclose(shifted @ x, rhs, atol=1e-10)

    def test_random_spd_matches_dense(self):
        rng = np.random.default_rng(5)
        A = random_spd(rng, 50)
        rhs = rng.standard_normal(50)
        x, stats = pcg_solve(A, rhs, tol=1e-10)
        assert stats.converged
        assert np.linalg.norm(A @ x - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))
        assert np.allclose(x, np.linalg.solve(A, rhs), atol=1e-7)

    def test_warm_start_shortcut(self):
        rng = np.random.default_rng(6)
        A = random_spd(rng, 10)
        rhs = rng.standard_normal(10)
        exact = np.linalg.solve(A, rhs)
        _, stats = pcg_solve(A, rhs, x0=exact, tol=1e-8)
        assert stats.iterations == 0

    def test_breakdown_on_indefinite(self):
        A = np.diag([1.0, -1.0])
        with pytest.raises(IndefiniteOperatorError):
            pcg_solve(A, np.array([1.0, 1.0]))

    def test_maxit_reports_nonconvergence(self):
        rng = np.random.default_rng(7)
        A = random_spd(rng, 30, shift=1e-4)
        rhs = rng.standard_normal(30)
        _, stats = pcg_solve(A, rhs, tol=1e-14, maxit=2)
        assert not stats.converged

    def test_residual_history_decreases_on_benign_instance(self):
        rng = np.random.default_rng(8)
        A = random_spd(rng, 12, shift=2.0)
        rhs = rng.standard_normal(12)
        _, stats = pcg_solve(A, rhs, tol=1e-12)
        h = np.array(stats.residual_history)
        assert np.all(np.diff(h) <= 1e-12)


class TestNormalEquations:
    def test_identity_gram(self):
        solver = NormalEquationSolver(np.eye(3))
        rhs = np.array([1.0, 2.0, 3.0])
        assert np.allclose(solve_normal_equations(solver, rhs), rhs)

    def test_hand_inverse(self):
        G = np.array([[2.0, 1.0], [1.0, 2.0]])
        inv = np.array([[2.0, -1.0], [-1.0, 2.0]]) / 3.0
        solver = NormalEquationSolver(G)
        rhs = np.array([1.0, -1.0])
        assert np.allclose(solver.solve(rhs), inv @ rhs, atol=1e-12)

    def test_random_full_rank_residual(self):
        rng = np.random.default_rng(9)
        A = rng.standard_normal((6, 20))
        solver = NormalEquationSolver(A @ A.T)
        rhs = rng.standard_normal(6)
        x = solver.solve(rhs)
        assert np.linalg.norm(A @ A.T @ x - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))

    def test_rank_deficient_lists_rows(self):
        A = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="dependent rows"):
            NormalEquationSolver(A @ A.T)
