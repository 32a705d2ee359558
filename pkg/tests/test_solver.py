import numpy as np
import pytest
from numpy.testing import assert_allclose

from covlasso import (
    CovMatrix,
    DimMismatch,
    InvalidInput,
    ReducedProblem,
    SymmetricMatrix,
    dual_certificate,
    embed,
    eigendecompose,
    kkt_residuals,
    lambda_max,
    prediction_error,
    reduce_problem,
    soft_threshold,
    solution_path,
    solve,
    sym_sqrt,
)
from covlasso.solver import reduced_prediction_error

from oracles import enumerate_lasso, solve_diagonal, solve_univariate, spd_matrix


def rp_1d(chat=1.0, bhat=1.0, cov_ii=1.0):
    return ReducedProblem(
        target=0,
        chat=SymmetricMatrix([[chat]]),
        bhat=np.array([bhat]),
        cov_ii=cov_ii,
        n=2,
    )


def rp_from(chat, bhat, cov_ii=1.0):
    chat = np.atleast_2d(np.asarray(chat, dtype=float))
    return ReducedProblem(
        target=0,
        chat=SymmetricMatrix(chat),
        bhat=np.asarray(bhat, dtype=float),
        cov_ii=cov_ii,
        n=chat.shape[0] + 1,
    )


class TestSoftThreshold:
    def test_values(self):
        assert soft_threshold(3.0, 1.0) == 2.0
        assert soft_threshold(-3.0, 1.0) == -2.0
        assert soft_threshold(0.5, 1.0) == 0.0
        assert soft_threshold(-1.0, 1.0) == 0.0


class TestLambdaMax:
    def test_worked_example(self):
        assert lambda_max(rp_from(np.eye(2), [0.9, 0.0])) == pytest.approx(1.8)

    def test_zero_above_threshold(self, rng):
        for _ in range(20):
            m = int(rng.integers(1, 8))
            rp = rp_from(spd_matrix(rng, m), rng.normal(size=m))
            lmax = lambda_max(rp)
            sol = solve(rp, 1.0001 * lmax)
            assert np.all(sol.coef == 0.0)
            assert sol.converged


class TestSolve:
    def test_univariate_worked_examples(self):
        assert solve(rp_1d(), 1.0).coef[0] == pytest.approx(0.5, abs=1e-12)
        assert solve(rp_1d(), 3.0).coef[0] == 0.0

    def test_diagonal_worked_example(self):
        sol = solve(rp_from(np.eye(2), [0.9, 0.0]), 0.4)
        assert_allclose(sol.coef, [0.7, 0.0], atol=1e-12)
        assert sol.converged

    def test_univariate_closed_form_sweep(self, rng):
        for _ in range(50):
            chat = float(rng.uniform(0.1, 5.0))
            bhat = float(rng.normal() * 3.0)
            lam = float(rng.uniform(0.01, 4.0))
            got = solve(rp_1d(chat, bhat), lam).coef[0]
            assert got == pytest.approx(solve_univariate(chat, bhat, lam), abs=1e-10)

    def test_diagonal_closed_form_sweep(self, rng):
        for _ in range(30):
            m = int(rng.integers(2, 9))
            diag = rng.uniform(0.1, 4.0, size=m)
            bhat = rng.normal(size=m) * 2.0
            lam = float(rng.uniform(0.01, 3.0))
            got = solve(rp_from(np.diag(diag), bhat), lam).coef
            assert_allclose(got, solve_diagonal(diag, bhat, lam), atol=1e-10)

    def test_matches_enumeration_oracle(self, rng):
        for _ in range(12):
            m = int(rng.integers(2, 6))
            chat = spd_matrix(rng, m, cond=50.0)
            bhat = rng.normal(size=m)
            rp = rp_from(chat, bhat)
            lam = float(rng.uniform(0.05, 1.2) * lambda_max(rp))
            sol = solve(rp, lam)
            oracle_c, oracle_val = enumerate_lasso(chat, bhat, lam)
            assert sol.objective <= oracle_val + 1e-8
            assert abs(sol.objective - oracle_val) <= 1e-8 * (1.0 + abs(oracle_val))
            assert_allclose(sol.coef, oracle_c, atol=1e-7)

    def test_warm_start_agrees_with_cold(self, rng):
        for _ in range(10):
            m = int(rng.integers(2, 7))
            rp = rp_from(spd_matrix(rng, m), rng.normal(size=m))
            lam = 0.3 * lambda_max(rp)
            cold = solve(rp, lam)
            warm = solve(rp, lam, init=rng.normal(size=m))
            assert_allclose(cold.coef, warm.coef, atol=1e-8)

    def test_pinned_zero_curvature_coordinate(self):
        rp = rp_from(np.diag([1.0, 0.0]), [0.5, 0.0])
        sol = solve(rp, 0.2)
        assert sol.pinned == (1,)
        assert sol.coef[1] == 0.0
        assert sol.coef[0] == pytest.approx(0.4)
        assert sol.converged

    def test_invalid_penalty(self):
        with pytest.raises(InvalidInput):
            solve(rp_1d(), 0.0)
        with pytest.raises(InvalidInput):
            solve(rp_1d(), -1.0)

    def test_init_shape_checked(self):
        with pytest.raises(DimMismatch):
            solve(rp_1d(), 1.0, init=np.zeros(3))


class TestKkt:
    def test_valid_at_univariate_optimum(self):
        rp = rp_1d()
        r, ok = kkt_residuals(rp, 1.0, np.array([0.5]))
        assert_allclose(r, [-0.5])
        assert ok

    def test_valid_with_inactive_coordinate(self):
        rp = rp_from(np.eye(2), [0.9, 0.0])
        r, ok = kkt_residuals(rp, 0.4, np.array([0.7, 0.0]))
        assert_allclose(r, [-0.2, 0.0], atol=1e-15)
        assert ok

    def test_invalid_off_optimum(self):
        r, ok = kkt_residuals(rp_1d(), 1.0, np.array([0.9]))
        assert_allclose(r, [-0.1])
        assert not ok

    def test_solver_output_passes(self, rng):
        for _ in range(20):
            m = int(rng.integers(1, 10))
            rp = rp_from(spd_matrix(rng, m), rng.normal(size=m))
            lam = float(rng.uniform(0.05, 1.5) * max(lambda_max(rp), 0.1))
            sol = solve(rp, lam)
            _, ok = kkt_residuals(rp, lam, sol.coef)
            assert ok == sol.converged
            assert ok


class TestDualCertificate:
    def _root(self, rp):
        return sym_sqrt(eigendecompose(rp.chat))

    def test_univariate_optimum(self):
        rp = rp_1d()
        cert = dual_certificate(rp, 1.0, np.array([0.5]), self._root(rp))
        assert cert.xi[0] == pytest.approx(np.sqrt(2.0) * 0.5)
        assert cert.feasibility_violation <= 1e-12
        assert abs(cert.gap) <= 1e-12

    def test_gap_positive_off_optimum(self):
        rp = rp_1d()
        root = self._root(rp)
        for c in (0.2, 0.8, -0.3):
            cert = dual_certificate(rp, 1.0, np.array([c]), root)
            assert cert.gap > 1e-6

    def test_gap_nonnegative_and_small_at_solutions(self, rng):
        for _ in range(20):
            m = int(rng.integers(2, 8))
            rp = rp_from(spd_matrix(rng, m, cond=1e3), rng.normal(size=m))
            lam = float(rng.uniform(0.05, 1.3) * lambda_max(rp))
            sol = solve(rp, lam)
            cert = dual_certificate(rp, lam, sol.coef, self._root(rp))
            assert cert.gap >= -1e-9
            assert cert.gap <= 1e-6 * (1.0 + abs(sol.objective))
            assert cert.feasibility_violation <= 1e-6

    def test_zero_solution_above_lambda_max(self, rng):
        rp = rp_from(spd_matrix(rng, 3), rng.normal(size=3))
        lam = 1.5 * lambda_max(rp)
        cert = dual_certificate(rp, lam, np.zeros(3), self._root(rp))
        assert cert.feasibility_violation <= 1e-12
        assert abs(cert.gap) <= 1e-10


class TestSolutionPath:
    def test_univariate_worked_example(self):
        rp = rp_1d()
        path = solution_path(rp, [2.0, 1.0, 0.5])
        coefs = [s.coef[0] for s in path.solutions]
        assert_allclose(coefs, [0.0, 0.5, 0.75], atol=1e-12)
        assert_allclose(path.errors, [1.0, 0.25, 0.0625], atol=1e-12)
        assert path.monotone

    def test_duplicate_grid_values_give_identical_solutions(self):
        rp = rp_1d()
        path = solution_path(rp, [1.0, 1.0, 0.5])
        assert path.solutions[0].coef[0] == path.solutions[1].coef[0]

    def test_grid_validation(self):
        rp = rp_1d()
        with pytest.raises(InvalidInput):
            solution_path(rp, [])
        with pytest.raises(InvalidInput):
            solution_path(rp, [0.5, 1.0])
        with pytest.raises(InvalidInput):
            solution_path(rp, [1.0, 0.0])

    def test_monotone_and_bracketed_on_random_spd(self, rng):
        for _ in range(8):
            n = int(rng.integers(3, 12))
            cov = CovMatrix(SymmetricMatrix(spd_matrix(rng, n, cond=1e4)), 100)
            rp = reduce_problem(cov, int(rng.integers(0, n)))
            lmax = lambda_max(rp)
            grid = np.geomspace(lmax, lmax / 1000.0, 15)
            path = solution_path(rp, grid)
            assert path.monotone
            assert all(s.converged for s in path.solutions)
            inv = np.linalg.inv(cov.mat.data)
            keep = np.arange(n) != rp.target
            err0 = 1.0 / inv[rp.target, rp.target]
            for err in path.errors:
                assert err >= err0 - 1e-6 * max(1.0, err0)
                assert err <= rp.cov_ii + 1e-9
            assert path.errors[0] == pytest.approx(rp.cov_ii, rel=1e-12)


class TestEmbed:
    def test_index_mapping_middle_target(self):
        cov = CovMatrix(
            SymmetricMatrix([[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 3.0]]), 10
        )
        rp = reduce_problem(cov, 1)
        sol = solve(rp, 0.1)
        dep = embed(sol, rp)
        assert dep.theta[1] == -1.0
        assert dep.theta[0] == sol.coef[0]
        assert dep.theta[2] == sol.coef[1]
        assert dep.target == 1
        # embedded prediction error equals the full quadratic form
        assert dep.pred_error == pytest.approx(
            prediction_error(cov, dep.theta), abs=1e-12
        )
        assert 1 not in dep.support

    def test_support_thresholding(self):
        rp = rp_from(np.eye(2), [0.9, 0.0])
        sol = solve(rp, 0.4)
        dep = embed(sol, rp)
        assert dep.support == (1,)

    def test_certificates_present(self):
        rp = rp_1d()
        dep = embed(solve(rp, 1.0), rp)
        assert dep.certificates.kkt_valid
        assert dep.certificates.kkt_max_violation <= 1e-10
        assert dep.certificates.dual_gap <= 1e-10
        assert not dep.certificates.floored

    def test_empty_support_error_equals_target_moment(self):
        rp = rp_1d(cov_ii=1.0)
        dep = embed(solve(rp, 3.0), rp)
        assert dep.support == ()
        assert dep.pred_error == pytest.approx(1.0)


class TestPredictionError:
    def test_quadratic_form(self):
        cov = CovMatrix(SymmetricMatrix([[1.0, 1.0], [1.0, 1.0]]), 4)
        assert prediction_error(cov, np.array([1.0, -1.0])) == 0.0
        assert prediction_error(cov, np.array([1.0, 1.0])) == pytest.approx(4.0)

    def test_clamped_at_zero(self):
        # roundoff can push the form a hair negative; never report that
        cov = CovMatrix(SymmetricMatrix(np.eye(2) * 1e-30), 4)
        assert prediction_error(cov, np.array([1e-8, -1e-8])) >= 0.0

    def test_shape_checked(self):
        cov = CovMatrix(SymmetricMatrix(np.eye(2)), 4)
        with pytest.raises(DimMismatch):
            prediction_error(cov, np.ones(3))

    def test_reduced_form_matches_full_form(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 9))
            cov = CovMatrix(SymmetricMatrix(spd_matrix(rng, n)), 10)
            target = int(rng.integers(0, n))
            rp = reduce_problem(cov, target)
            coef = rng.normal(size=n - 1)
            theta = np.empty(n)
            theta[target] = -1.0
            theta[np.arange(n) != target] = coef
            assert reduced_prediction_error(rp, coef) == pytest.approx(
                prediction_error(cov, theta), rel=1e-10, abs=1e-12
            )
