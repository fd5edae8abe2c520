import numpy as np
import pytest

from kernsolve import (Dataset, InvalidInputError, KernelFamily, KernelSpec,
                       ResidualNorm, SolverConfig, SolverKind,
                       build_cross_kernel, build_dense_kernel, cholesky_solve,
                       fit, generate_synthetic, log_marginal_likelihood,
                       ml_grid_search, predict_mean, predict_variance,
                       simple_krige)

GAUSS = KernelFamily.GAUSSIAN

TIGHT = SolverConfig(outer_tolerance=1e-10,
                     residual_norm_mode=ResidualNorm.TWO_NORM)


class TestFit:
    def test_single_point(self):
        train = Dataset(np.array([[0.2, 0.4]]), targets=[2.0])
        model = fit(train, KernelSpec(GAUSS, 1.0, 1.0),
                    solver=SolverKind.DIRECT)
        assert model.weights == pytest.approx([1.0])

    def test_zero_targets(self):
        train = Dataset(np.random.default_rng(0).random((30, 2)),
                        targets=np.zeros(30))
        model = fit(train, KernelSpec(GAUSS, 0.5, 1e-2), solver=SolverKind.CG)
        assert np.array_equal(model.weights, np.zeros(30))

    def test_missing_targets_rejected(self):
        with pytest.raises(InvalidInputError):
            fit(Dataset(np.zeros((3, 1))), KernelSpec(GAUSS, 1.0, 1e-2))

    @pytest.mark.parametrize("solver", [SolverKind.CG, SolverKind.FGMRES,
                                        SolverKind.FCG, SolverKind.ILU_CG])
    def test_iterative_matches_direct(self, solver):
        train = generate_synthetic(300, 3, seed=1)
        spec = KernelSpec(GAUSS, 0.5, 1e-2)
        direct = fit(train, spec, solver=SolverKind.DIRECT)
        other = fit(train, spec, solver=solver, solver_config=TIGHT)
        assert np.mean(np.abs(direct.weights - other.weights)) < 1e-6


class TestPredictMean:
    def test_interpolates_single_training_point(self):
        train = Dataset(np.array([[0.5]]), targets=[3.0])
        model = fit(train, KernelSpec(GAUSS, 1.0, 0.0),
                    solver=SolverKind.DIRECT)
        got = predict_mean(model, Dataset(np.array([[0.5]])))
        assert got == pytest.approx([3.0], rel=1e-12)

    def test_zero_weights_zero_prediction(self):
        train = Dataset(np.random.default_rng(2).random((20, 2)),
                        targets=np.zeros(20))
        model = fit(train, KernelSpec(GAUSS, 0.5, 1e-2),
                    solver=SolverKind.DIRECT)
        test = Dataset(np.random.default_rng(3).random((7, 2)))
        assert np.array_equal(predict_mean(model, test), np.zeros(7))

    def test_matches_dense_cross_kernel_oracle(self):
        train = generate_synthetic(500, 3, seed=4)
        test = generate_synthetic(100, 3, seed=5, targets=False)
        spec = KernelSpec(GAUSS, 0.4, 1e-2)
        model = fit(train, spec, solver=SolverKind.DIRECT)
        want = build_cross_kernel(test.points, train, spec) @ model.weights
        got = predict_mean(model, test)
        assert np.max(np.abs(got - want)) < 1e-10

    def test_dimension_mismatch(self):
        train = generate_synthetic(10, 2, seed=6)
        model = fit(train, KernelSpec(GAUSS, 0.5, 1e-2),
                    solver=SolverKind.DIRECT)
        with pytest.raises(InvalidInputError):
            predict_mean(model, Dataset(np.zeros((2, 3))))


class TestPredictVariance:
    def test_huge_regularizer_limit(self):
        train = generate_synthetic(50, 2, seed=7)
        model = fit(train, KernelSpec(GAUSS, 0.5, 1e6),
                    solver=SolverKind.DIRECT)
        test = generate_synthetic(5, 2, seed=8, targets=False)
        var = predict_variance(model, test)
        assert np.allclose(var, 1.0, atol=1e-3)

    def test_far_test_point(self):
        train = generate_synthetic(40, 2, seed=9)
        model = fit(train, KernelSpec(GAUSS, 0.05, 1e-2),
                    solver=SolverKind.DIRECT)
        far = Dataset(np.full((1, 2), 100.0))
        assert predict_variance(model, far) == pytest.approx([1.0], abs=1e-6)

    def test_matches_dense_oracle(self):
        train = generate_synthetic(300, 3, seed=10)
        test = generate_synthetic(20, 3, seed=11, targets=False)
        spec = KernelSpec(GAUSS, 0.5, 1e-2)
        model = fit(train, spec, solver=SolverKind.CG, solver_config=TIGHT)
        got = predict_variance(model, test)
        k = build_dense_kernel(train, spec)
        kstar = build_cross_kernel(test.points, train, spec)
        want = 1.0 - np.einsum("ij,ji->i", kstar, cholesky_solve(k, kstar.T))
        assert np.max(np.abs(got - want)) < 1e-6

    def test_nonnegative_and_shrinks_at_observed_point(self):
        rng = np.random.default_rng(12)
        pts = rng.random((60, 2))
        y = rng.standard_normal(60)
        spec = KernelSpec(GAUSS, 0.3, 1e-2)
        test = Dataset(pts[:5])
        small = fit(Dataset(pts[5:], y[5:]), spec, solver=SolverKind.DIRECT)
        var_before = predict_variance(small, test)
        grown = fit(Dataset(pts, y), spec, solver=SolverKind.DIRECT)
        var_after = predict_variance(grown, test)
        assert np.all(var_after >= 0.0)
        assert np.all(var_after <= var_before + 1e-10)


class TestSimpleKrige:
    def test_single_point_interpolation(self):
        train = Dataset(np.array([[0.1, 0.9]]), targets=[5.0])
        got = simple_krige(train, KernelSpec(GAUSS, 1.0, 0.0),
                           Dataset(np.array([[0.1, 0.9]])),
                           solver=SolverKind.DIRECT)
        assert got == pytest.approx([5.0], rel=1e-12)

    def test_far_from_data_decays_to_zero(self):
        train = Dataset(np.random.default_rng(13).random((30, 2)),
                        targets=np.full(30, 4.0))
        far = Dataset(np.full((1, 2), 50.0))
        got = simple_krige(train, KernelSpec(GAUSS, 0.1, 1e-2), far,
                           solver=SolverKind.DIRECT)
        assert abs(got[0]) < 1e-10

    def test_equals_fit_plus_predict_mean(self):
        train = generate_synthetic(200, 2, seed=14)
        test = generate_synthetic(30, 2, seed=15, targets=False)
        spec = KernelSpec(GAUSS, 0.4, 1e-2)
        via_krige = simple_krige(train, spec, test, solver=SolverKind.FGMRES,
                                 solver_config=TIGHT)
        model = fit(train, spec, solver=SolverKind.FGMRES, solver_config=TIGHT)
        via_gpr = predict_mean(model, test)
        assert np.array_equal(via_krige, via_gpr)

    def test_solver_paths_agree(self):
        train = generate_synthetic(400, 2, seed=16)
        test = generate_synthetic(60, 2, seed=17, targets=False)
        spec = KernelSpec(GAUSS, 0.5, 1e-2)
        by_cg = simple_krige(train, spec, test, solver=SolverKind.CG,
                             solver_config=TIGHT)
        by_fgmres = simple_krige(train, spec, test, solver=SolverKind.FGMRES,
                                 solver_config=TIGHT)
        assert np.mean(np.abs(by_cg - by_fgmres)) < 1e-6


class TestMlGridSearch:
    def test_single_cell(self):
        train = generate_synthetic(50, 2, seed=18)
        spec = ml_grid_search(train, [0.7], [1e-3])
        assert spec.bandwidth == 0.7
        assert spec.regularizer == 1e-3

    def test_zero_targets_prefers_smallest_logdet(self):
        rng = np.random.default_rng(19)
        train = Dataset(rng.random((60, 2)), targets=np.zeros(60))
        bw_grid, gamma_grid = [0.2, 1.0], [1e-4, 1e-1]
        spec = ml_grid_search(train, bw_grid, gamma_grid, subset_size=60)
        # oracle: with y = 0 the likelihood is -logdet/2 - const
        best = None
        for bw in bw_grid:
            for gamma in gamma_grid:
                cand = KernelSpec(GAUSS, bw, gamma)
                k = build_dense_kernel(
                    Dataset(train.points[np.random.default_rng(1234).choice(
                        60, 60, replace=False)]), cand)
                _, logdet = np.linalg.slogdet(k)
                if best is None or logdet < best[0]:
                    best = (logdet, cand)
        assert spec == best[1]

    def test_recovers_generator_bandwidth(self):
        # draw from a known Gaussian-kernel GP, grid must pick a
        # bandwidth within one cell of the truth
        rng = np.random.default_rng(20)
        pts = rng.random((400, 2))
        true_spec = KernelSpec(GAUSS, 0.5, 1e-2)
        k = build_dense_kernel(Dataset(pts), true_spec)
        y = np.linalg.cholesky(k) @ rng.standard_normal(400)
        train = Dataset(pts, y)
        grid = [0.125, 0.25, 0.5, 1.0, 2.0]
        spec = ml_grid_search(train, grid, [1e-2], subset_size=400)
        picked = grid.index(spec.bandwidth)
        assert abs(picked - grid.index(0.5)) <= 1

    def test_grid_order_invariant(self):
        train = generate_synthetic(80, 2, seed=21)
        a = ml_grid_search(train, [0.2, 0.5, 1.0], [1e-4, 1e-2])
        b = ml_grid_search(train, [1.0, 0.2, 0.5], [1e-2, 1e-4])
        assert a == b

    def test_empty_grid_rejected(self):
        train = generate_synthetic(10, 1, seed=22)
        with pytest.raises(InvalidInputError):
            ml_grid_search(train, [], [1e-2])

    def test_log_marginal_likelihood_value(self):
        # oracle: dense multivariate-normal formula via slogdet
        train = generate_synthetic(40, 2, seed=23)
        spec = KernelSpec(GAUSS, 0.6, 1e-2)
        k = build_dense_kernel(train, spec)
        _, logdet = np.linalg.slogdet(k)
        want = (-0.5 * train.targets @ np.linalg.solve(k, train.targets)
                - 0.5 * logdet - 0.5 * 40 * np.log(2 * np.pi))
        assert log_marginal_likelihood(train, spec) == pytest.approx(
            want, rel=1e-10)
