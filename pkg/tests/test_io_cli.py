import csv

import numpy as np
import pytest

from kernsolve import (CsvParseError, CsvSchema, EmptyDatasetError,
                       ExperimentConfig, InvalidInputError, KernelFamily,
                       KernelSpec, ResidualNorm, SolverConfig, emit_outputs,
                       generate_synthetic, ingest_csv, run_experiment,
                       run_sweep, write_dataset_csv)
from kernsolve.cli import main
from kernsolve.experiments import COMPARISON_COLUMNS


class TestGenerateSynthetic:
    def test_single_point(self):
        d = generate_synthetic(1, 3, seed=0)
        assert d.points.shape == (1, 3)
        assert np.all((d.points >= 0) & (d.points <= 1))

    def test_deterministic(self):
        a = generate_synthetic(100, 4, seed=7)
        b = generate_synthetic(100, 4, seed=7)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.targets, b.targets)

    def test_uniform_coordinate_means(self):
        d = generate_synthetic(10000, 2, seed=1, targets=False)
        assert np.all(np.abs(d.points.mean(axis=0) - 0.5) < 0.02)

    def test_bad_args(self):
        with pytest.raises(InvalidInputError):
            generate_synthetic(0, 3, seed=0)


class TestIngestCsv:
    def _write(self, path, rows):
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)

    def test_sentinel_rows_dropped(self, tmp_path):
        path = tmp_path / "data.csv"
        self._write(path, [["a", "b", "y"], ["0.1", "0.2", "1.0"],
                           ["0.3", "NaN", "2.0"], ["0.5", "0.6", "3.0"]])
        result = ingest_csv(path, CsvSchema(target_column="y",
                                            scale_features=False))
        assert result.dataset.n == 2
        assert result.dropped == 1

    def test_header_only_is_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        self._write(path, [["a", "y"]])
        with pytest.raises(EmptyDatasetError):
            ingest_csv(path, CsvSchema(target_column="y"))

    def test_malformed_cell_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        self._write(path, [["a", "y"], ["0.1", "1.0"], ["oops", "2.0"]])
        with pytest.raises(CsvParseError) as exc:
            ingest_csv(path, CsvSchema(target_column="y"))
        assert exc.value.line_number == 3

    def test_round_trip(self, tmp_path):
        data = generate_synthetic(50, 3, seed=2)
        path = tmp_path / "rt.csv"
        write_dataset_csv(path, data)
        result = ingest_csv(path, CsvSchema(target_column="y",
                                            scale_features=False))
        assert np.array_equal(result.dataset.points, data.points)
        assert np.array_equal(result.dataset.targets, data.targets)

    def test_scaling_to_unit_box(self, tmp_path):
        rng = np.random.default_rng(3)
        data = rng.uniform(-10, 10, size=(40, 2))
        path = tmp_path / "scale.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "b", "y"])
            for row in data:
                w.writerow(list(row) + [1.0])
        result = ingest_csv(path, CsvSchema(target_column="y"))
        pts = result.dataset.points
        assert pts.min() >= 0.0 and pts.max() <= 1.0
        assert np.allclose(pts.min(axis=0), 0.0)
        assert np.allclose(pts.max(axis=0), 1.0)

    def test_missing_targets_as_holdout(self, tmp_path):
        path = tmp_path / "grid.csv"
        self._write(path, [["a", "y"], ["0.1", "1.0"], ["0.2", "NaN"],
                           ["0.3", "2.0"], ["0.4", "NaN"]])
        result = ingest_csv(path, CsvSchema(target_column="y",
                                            scale_features=False),
                            collect_missing_targets=True)
        assert result.dataset.n == 2
        assert result.holdout.n == 2
        assert result.dropped == 0


class TestRunExperiment:
    def _cfg(self, **kw):
        base = dict(n=200, d=2, seed=0,
                    spec=KernelSpec(KernelFamily.GAUSSIAN, 0.5, 1e-2),
                    solvers=["direct", "cg"],
                    solver_config=SolverConfig(
                        outer_tolerance=1e-8,
                        residual_norm_mode=ResidualNorm.TWO_NORM))
        base.update(kw)
        return ExperimentConfig(**base)

    def test_direct_and_cg_agree(self):
        report = run_experiment(self._cfg())
        agreements = {r["solver"]: r["agreement"] for r in report.rows}
        assert agreements["direct"] == 0.0  # direct is the reference
        # Residual tol 1e-8 times kappa ~ 1e3 bounds the solution error.
        assert agreements["cg"] < 1e-5

    def test_fgmres_beats_cg_iterations(self):
        report = run_experiment(self._cfg(
            n=500, spec=KernelSpec(KernelFamily.GAUSSIAN, 1.0, 1e-4),
            solvers=["cg", "fgmres"],
            solver_config=SolverConfig(
                outer_tolerance=1e-6,
                residual_norm_mode=ResidualNorm.TWO_NORM_OVER_N)))
        rows = {r["solver"]: r for r in report.rows}
        assert rows["fgmres"]["outer_iters"] < rows["cg"]["outer_iters"]

    def test_failure_does_not_abort_rest(self, monkeypatch):
        import kernsolve.experiments as exps

        real = exps.cg

        def broken_cg(*args, **kwargs):
            raise InvalidInputError("boom")

        monkeypatch.setattr(exps, "cg", broken_cg)
        try:
            report = run_experiment(self._cfg(solvers=["cg", "direct"]))
        finally:
            monkeypatch.setattr(exps, "cg", real)
        rows = {r["solver"]: r for r in report.rows}
        assert rows["cg"]["termination"] == "error"
        assert rows["direct"]["termination"] == "converged"

    def test_no_solvers_rejected(self):
        with pytest.raises(InvalidInputError):
            self._cfg(solvers=[])

    def test_deterministic_except_walltime(self):
        a = run_experiment(self._cfg())
        b = run_experiment(self._cfg())
        for ra, rb in zip(a.rows, b.rows):
            for col in COMPARISON_COLUMNS:
                if col == "wall_ms":
                    continue
                assert ra[col] == rb[col]
        for name in a.traces:
            assert a.traces[name].residuals == b.traces[name].residuals


class TestEmitOutputs:
    def test_files_and_row_counts(self, tmp_path):
        cfg = ExperimentConfig(
            n=150, d=2, seed=1,
            spec=KernelSpec(KernelFamily.GAUSSIAN, 0.5, 1e-2),
            solvers=["cg", "fgmres"],
            solver_config=SolverConfig(outer_tolerance=1e-7,
                                       residual_norm_mode=ResidualNorm.TWO_NORM))
        report = run_experiment(cfg)
        written = emit_outputs(report, tmp_path / "out")
        names = {p.name for p in written}
        assert {"comparison.csv", "residuals_cg.csv", "residuals_fgmres.csv",
                "manifest.txt"} <= names
        with open(tmp_path / "out" / "comparison.csv") as fh:
            header = fh.readline().strip()
        assert header == ",".join(COMPARISON_COLUMNS)
        rows = {r["solver"]: r for r in report.rows}
        for solver in ("cg", "fgmres"):
            with open(tmp_path / "out" / f"residuals_{solver}.csv") as fh:
                lines = fh.read().strip().splitlines()
            assert lines[0] == "iter,residual,cumulative_inner,elapsed_ms"
            assert len(lines) - 1 == rows[solver]["outer_iters"] + 1

    def test_manifest_keys(self, tmp_path):
        cfg = ExperimentConfig(n=60, d=2, seed=3, solvers=["cg"],
                               spec=KernelSpec(KernelFamily.GAUSSIAN, 0.5, 1e-2))
        report = run_experiment(cfg)
        emit_outputs(report, tmp_path)
        manifest = dict(
            line.strip().split(" = ", 1)
            for line in open(tmp_path / "manifest.txt") if " = " in line)
        assert manifest["seed"] == "3"
        assert manifest["solvers"] == "cg"
        assert "kernsolve_version" in manifest


class TestRunSweep:
    def test_delta_sweep_rows(self):
        cfg = ExperimentConfig(
            n=200, d=2, seed=0,
            spec=KernelSpec(KernelFamily.GAUSSIAN, 0.7, 1e-4),
            solvers=["fgmres"],
            solver_config=SolverConfig(
                outer_tolerance=1e-6,
                residual_norm_mode=ResidualNorm.TWO_NORM_OVER_N))
        rows = run_sweep(cfg, "delta", [1e-4, 1e-2])
        assert [r["value"] for r in rows] == [1e-4, 1e-2]
        assert all(r["solver"] == "fgmres" for r in rows)

    def test_unknown_param(self):
        cfg = ExperimentConfig(n=20, d=1, seed=0, solvers=["cg"])
        with pytest.raises(InvalidInputError):
            run_sweep(cfg, "nope", [1.0])


class TestCli:
    def test_gen_and_solve(self, tmp_path, capsys):
        data_csv = tmp_path / "data.csv"
        assert main(["gen", "--n", "120", "--d", "2", "--seed", "5",
                     "--out", str(data_csv)]) == 0
        outdir = tmp_path / "run"
        rc = main(["solve", "--csv", str(data_csv), "--target", "y",
                   "--sigma", "0.5", "--gamma", "1e-2",
                   "--solvers", "direct,cg,fgmres",
                   "--tol", "1e-7", "--residual-mode", "rel2",
                   "--out", str(outdir)])
        assert rc == 0
        assert (outdir / "comparison.csv").exists()
        assert (outdir / "manifest.txt").exists()
        out = capsys.readouterr().out
        assert "fgmres" in out

    def test_sweep_command(self, tmp_path):
        outdir = tmp_path / "sweep"
        rc = main(["sweep", "--n", "150", "--d", "2", "--seed", "1",
                   "--sigma", "0.7", "--gamma", "1e-4",
                   "--param", "delta", "--values", "1e-3,1e-1",
                   "--out", str(outdir)])
        assert rc == 0
        with open(outdir / "sweep.csv") as fh:
            lines = fh.read().strip().splitlines()
        assert lines[0].startswith("param,value,solver")
        assert len(lines) == 3

    def test_gpr_command(self, tmp_path, capsys):
        outdir = tmp_path / "gpr"
        rc = main(["gpr", "--n", "200", "--d", "2", "--seed", "2",
                   "--sigma", "0.5", "--gamma", "1e-2",
                   "--solver", "fgmres", "--variance",
                   "--out", str(outdir)])
        assert rc == 0
        with open(outdir / "predictions.csv") as fh:
            header = fh.readline().strip()
        assert header == "x0,x1,mean,variance"

    def test_krige_command(self, tmp_path):
        data = generate_synthetic(300, 2, seed=4)
        rng = np.random.default_rng(4)
        mask = rng.random(300) < 0.2
        grid_csv = tmp_path / "grid.csv"
        write_dataset_csv(grid_csv, data, target_mask=mask)
        outdir = tmp_path / "krige"
        rc = main(["krige", "--csv", str(grid_csv), "--target", "y",
                   "--no-scale", "--sigma", "0.3", "--gamma", "1e-2",
                   "--out", str(outdir)])
        assert rc == 0
        with open(outdir / "kriged.csv") as fh:
            lines = fh.read().strip().splitlines()
        assert len(lines) - 1 == int(mask.sum())

    def test_config_file_with_cli_override(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("n = 100\nd = 2\nseed = 9\nsigma = 0.5\n"
                          "solvers = cg\n")
        outdir = tmp_path / "cfgrun"
        rc = main(["solve", "--config", str(config), "--solvers", "cg,fgmres",
                   "--out", str(outdir)])
        assert rc == 0
        with open(outdir / "manifest.txt") as fh:
            manifest = fh.read()
        assert "seed = 9" in manifest           # from config file
        assert "solvers = cg fgmres" in manifest  # CLI override wins

    def test_error_exit_code(self, tmp_path, capsys):
        rc = main(["krige", "--csv", str(tmp_path / "missing.csv"),
                   "--target", "y", "--out", str(tmp_path)])
        assert rc == 1
