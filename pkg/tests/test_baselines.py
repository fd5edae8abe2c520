import numpy as np
import pytest

from kernsolve import (Dataset, InvalidInputError, KernelFamily,
                       KernelOperator, KernelSpec, NotPositiveDefiniteError,
                       SolverConfig, build_dense_kernel, cg, cholesky_solve,
                       fcg, ilu_apply, ilu_factor)
from kernsolve.solvers import ILUPreconditioner


def _kernel_matrix(n, sigma, gamma, seed=0, d=2):
    rng = np.random.default_rng(seed)
    data = Dataset(rng.random((n, d)))
    return build_dense_kernel(data, KernelSpec(KernelFamily.GAUSSIAN,
                                               sigma, gamma))


class TestCholesky:
    def test_identity(self):
        b = np.arange(5.0)
        assert np.allclose(cholesky_solve(np.eye(5), b), b, atol=1e-14)

    def test_diagonal(self):
        k = np.diag([2.0, 8.0])
        assert np.allclose(cholesky_solve(k, np.array([2.0, 8.0])),
                           [1.0, 1.0], atol=1e-14)

    def test_recovers_known_solution(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((200, 200))
        k = a @ a.T + 200 * np.eye(200)
        x_true = rng.standard_normal(200)
        x = cholesky_solve(k, k @ x_true)
        assert np.max(np.abs(x - x_true)) < 1e-8

    def test_multiple_rhs_residual(self):
        k = _kernel_matrix(120, 0.4, 1e-2, seed=5)
        b = np.random.default_rng(6).standard_normal((120, 4))
        x = cholesky_solve(k, b)
        for j in range(4):
            res = np.linalg.norm(k @ x[:, j] - b[:, j]) / np.linalg.norm(b[:, j])
            assert res <= 1e-9

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefiniteError):
            cholesky_solve(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2))

    def test_asymmetric_rejected(self):
        with pytest.raises(InvalidInputError):
            cholesky_solve(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones(2))


class TestIlu:
    def test_diagonal_limit_is_jacobi(self):
        k = _kernel_matrix(30, 0.2, 0.5, seed=1)
        f = ilu_factor(k, drop_threshold=2.0)  # drops every off-diagonal
        assert f.retained_offdiagonals == 0
        v = np.random.default_rng(2).standard_normal(30)
        assert np.allclose(ilu_apply(f, v), v / np.diag(k), atol=1e-14)

    def test_no_drop_limit_is_direct_solve(self):
        k = _kernel_matrix(60, 0.4, 1e-1, seed=2)
        f = ilu_factor(k, drop_threshold=0.0)
        v = np.random.default_rng(3).standard_normal(60)
        assert np.max(np.abs(ilu_apply(f, v) - cholesky_solve(k, v))) < 1e-8

    def test_apply_zero_is_zero(self):
        k = _kernel_matrix(25, 0.3, 1e-2, seed=4)
        f = ilu_factor(k, 1e-3)
        assert np.array_equal(ilu_apply(f, np.zeros(25)), np.zeros(25))

    def test_dropping_monotone_in_threshold(self):
        k = _kernel_matrix(80, 0.25, 1e-3, seed=5)
        counts = [ilu_factor(k, tau).retained_offdiagonals
                  for tau in (0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)]
        assert counts == sorted(counts, reverse=True)

    def test_negative_threshold_rejected(self):
        with pytest.raises(InvalidInputError):
            ilu_factor(np.eye(3), -0.1)

    def test_length_mismatch(self):
        f = ilu_factor(np.eye(4), 0.0)
        with pytest.raises(InvalidInputError):
            ilu_apply(f, np.ones(3))

    def test_preconditioned_cg_beats_plain_cg(self):
        # near-sparse kernel matrix (small bandwidth): thresholded ILU
        # must cut the iteration count on the same system
        rng = np.random.default_rng(7)
        data = Dataset(rng.random((300, 2)))
        spec = KernelSpec(KernelFamily.GAUSSIAN, 0.1, 1e-4)
        k = build_dense_kernel(data, spec)
        op = KernelOperator(data, spec)
        b = k @ rng.standard_normal(300)
        cfg = SolverConfig(outer_tolerance=1e-8, max_outer_iterations=2000)
        _, plain = cg(op, b, cfg)
        factor = ilu_factor(k, 1e-3)
        _, pre = fcg(op, ILUPreconditioner(factor), b, cfg)
        assert pre.iterations < plain.iterations
