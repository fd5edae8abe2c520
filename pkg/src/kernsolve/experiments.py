"""Experiment orchestration: solver shoot-outs on one shared system,
parameter sweeps, and machine-readable outputs.

Every solver in an experiment consumes the same operator, right-hand
side and initial guess; agreement is measured against a reference
solution (direct Cholesky below the dense cap, CG above it).
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .baselines import cholesky_solve, ilu_factor
from .data_io import CsvSchema, generate_synthetic, ingest_csv
from .errors import InvalidInputError, KernsolveError
from .kernels import DEFAULT_DENSE_CAP, Dataset, KernelSpec, build_dense_kernel
from .operator import KernelOperator, Precision
from .solvers import (ConvergenceTrace, ILUPreconditioner, PreconditionerConfig,
                      ResidualNorm, SolverConfig, Termination, cg,
                      default_preconditioner_config, fcg, fgmres, gmres,
                      regularized_kernel_preconditioner)

SOLVER_NAMES = ("direct", "cg", "gmres", "fgmres", "fcg", "ilu-cg")

COMPARISON_COLUMNS = ("solver", "outer_iters", "inner_iters", "full_mvps",
                      "reduced_mvps", "wall_ms", "final_residual", "agreement")

RESIDUAL_COLUMNS = ("iter", "residual", "cumulative_inner", "elapsed_ms")


@dataclass
class ExperimentConfig:
    # dataset: synthetic (n, d, seed) unless csv_path is given
    n: int = 1000
    d: int = 3
    seed: int = 0
    csv_path: Optional[str] = None
    csv_schema: Optional[CsvSchema] = None
    spec: KernelSpec = field(default_factory=KernelSpec)
    solvers: List[str] = field(default_factory=lambda: ["cg", "fgmres"])
    solver_config: SolverConfig = field(default_factory=lambda: SolverConfig(
        residual_norm_mode=ResidualNorm.TWO_NORM_OVER_N))
    precond_config: Optional[PreconditionerConfig] = None
    #: "xtrue": b = K x_true with seeded x_true; "targets": b = y
    rhs_mode: str = "xtrue"
    drop_threshold: float = 1e-2
    dense_cap: int = DEFAULT_DENSE_CAP
    block_size: int = 256

    def __post_init__(self):
        if not self.solvers:
            raise InvalidInputError("experiment needs at least one solver")
        for s in self.solvers:
            if s not in SOLVER_NAMES:
                raise InvalidInputError(
                    f"unknown solver {s!r}; choose from {SOLVER_NAMES}")
        if self.rhs_mode not in ("xtrue", "targets"):
            raise InvalidInputError("rhs_mode must be 'xtrue' or 'targets'")


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: List[dict]
    traces: Dict[str, ConvergenceTrace]
    reference_solver: str
    n: int
    d: int


def _load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.csv_path:
        return ingest_csv(cfg.csv_path, cfg.csv_schema).dataset
    need_targets = cfg.rhs_mode == "targets"
    return generate_synthetic(cfg.n, cfg.d, cfg.seed, targets=need_targets)


def _residual_measure(op: KernelOperator, x, b, cfg: SolverConfig) -> float:
    r = b - op.matvec(x)
    rnorm = float(np.linalg.norm(r))
    if cfg.residual_norm_mode is ResidualNorm.TWO_NORM_OVER_N:
        return rnorm / b.shape[0]
    bnorm = float(np.linalg.norm(b))
    return rnorm / bnorm if bnorm > 0 else rnorm


def _precond_for(cfg: ExperimentConfig) -> PreconditionerConfig:
    if cfg.precond_config is not None:
        return cfg.precond_config
    return default_preconditioner_config(cfg.spec.regularizer,
                                         cfg.solver_config.outer_tolerance)


def _run_one(name: str, op: KernelOperator, b: np.ndarray,
             cfg: ExperimentConfig):
    """Run one solver; returns (x, trace_or_None, wall_seconds).

    Wall time covers solving plus any preconditioner/factorization
    construction, but not data loading.
    """
    scfg = cfg.solver_config
    t0 = time.perf_counter()
    if name == "direct":
        k = op.dense(cfg.dense_cap)
        x = cholesky_solve(k, b)
        trace = None
    elif name == "cg":
        x, trace = cg(op, b, scfg)
    elif name == "gmres":
        x, trace = gmres(op, b, scfg)
    elif name == "fgmres":
        precond = regularized_kernel_preconditioner(op, _precond_for(cfg))
        x, trace = fgmres(op, precond, b, scfg)
    elif name == "fcg":
        precond = regularized_kernel_preconditioner(op, _precond_for(cfg))
        x, trace = fcg(op, precond, b, scfg)
    elif name == "ilu-cg":
        k = op.dense(cfg.dense_cap)
        factor = ilu_factor(k, cfg.drop_threshold)
        x, trace = fcg(op, ILUPreconditioner(factor), b, scfg)
    else:
        raise InvalidInputError(f"unknown solver {name!r}")
    return x, trace, time.perf_counter() - t0


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run every requested solver on one shared (operator, b, x0=0).

    Individual solver failures are recorded in their report row and do
    not abort the remaining solvers.
    """
    data = _load_dataset(cfg)
    op = KernelOperator(data, cfg.spec, block_size=cfg.block_size)
    n = data.n
    if cfg.rhs_mode == "targets":
        b = data.targets.copy()
    else:
        rng = np.random.default_rng(cfg.seed + 1)
        x_true = rng.standard_normal(n)
        b = op.matvec(x_true)

    reference_solver = "direct" if n <= cfg.dense_cap else "cg"
    x_ref, _, _ = _run_one(reference_solver, op, b, cfg)

    rows = []
    traces = {}
    for name in cfg.solvers:
        row = {"solver": name}
        try:
            x, trace, wall = _run_one(name, op, b, cfg)
        except KernsolveError as exc:
            row.update(outer_iters="", inner_iters="", full_mvps="",
                       reduced_mvps="", wall_ms="", final_residual="",
                       agreement="", termination="error", error=str(exc))
            trace = getattr(exc, "trace", None)
            if trace is not None:
                traces[name] = trace
            rows.append(row)
            continue
        final_res = (trace.final_residual if trace is not None
                     else _residual_measure(op, x, b, cfg.solver_config))
        if trace is None:  # direct path: single-row history
            trace = ConvergenceTrace()
            trace.record(final_res, 0, 0, 0, wall)
            trace.termination = Termination.CONVERGED
        row.update(
            outer_iters=trace.iterations,
            inner_iters=trace.total_inner_iterations,
            full_mvps=trace.full_mvps[-1] if trace.full_mvps else 0,
            reduced_mvps=trace.reduced_mvps[-1] if trace.reduced_mvps else 0,
            wall_ms=wall * 1e3,
            final_residual=final_res,
            agreement=float(np.mean(np.abs(x - x_ref))),
            termination=trace.termination.value if trace.termination else "",
            error="")
        rows.append(row)
        traces[name] = trace
    return ExperimentReport(config=cfg, rows=rows, traces=traces,
                            reference_solver=reference_solver, n=n, d=data.d)


def emit_outputs(report: ExperimentReport, output_dir,
                 extra_manifest: dict = None) -> List[Path]:
    """Write comparison table, per-solver residual histories, and a
    run manifest.  Returns the written paths."""
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    table = outdir / "comparison.csv"
    with open(table, "w") as fh:
        fh.write(",".join(COMPARISON_COLUMNS) + "\n")
        for row in report.rows:
            fh.write(",".join(str(row[c]) for c in COMPARISON_COLUMNS) + "\n")
    written.append(table)

    for name, trace in report.traces.items():
        path = outdir / f"residuals_{name}.csv"
        with open(path, "w") as fh:
            fh.write(",".join(RESIDUAL_COLUMNS) + "\n")
            for i, res in enumerate(trace.residuals):
                fh.write(f"{i},{res!r},{trace.inner_iterations[i]},"
                         f"{trace.wall_times[i] * 1e3!r}\n")
        written.append(path)

    manifest = outdir / "manifest.txt"
    cfg = report.config
    entries = {
        "kernsolve_version": __version__,
        "python_version": platform.python_version(),
        "numpy_version": np.__version__,
        "n": report.n,
        "d": report.d,
        "seed": cfg.seed,
        "csv_path": cfg.csv_path or "none",
        "kernel_family": cfg.spec.family.value,
        "bandwidth": cfg.spec.bandwidth,
        "regularizer": cfg.spec.regularizer,
        "solvers": " ".join(cfg.solvers),
        "rhs_mode": cfg.rhs_mode,
        "outer_tolerance": cfg.solver_config.outer_tolerance,
        "max_outer_iterations": cfg.solver_config.max_outer_iterations,
        "restart_length": cfg.solver_config.restart_length,
        "residual_norm_mode": cfg.solver_config.residual_norm_mode.value,
        "drop_threshold": cfg.drop_threshold,
        "dense_cap": cfg.dense_cap,
        "reference_solver": report.reference_solver,
    }
    pcfg = cfg.precond_config
    if pcfg is not None:
        entries.update(delta=pcfg.delta, inner_tolerance=pcfg.inner_tolerance,
                       inner_precision=pcfg.inner_precision.value,
                       max_inner_iterations=pcfg.max_inner_iterations or "")
    if extra_manifest:
        entries.update(extra_manifest)
    with open(manifest, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")
    written.append(manifest)
    return written


def run_sweep(base: ExperimentConfig, param: str, values) -> List[dict]:
    """Re-run one experiment varying a single parameter.

    ``param`` is one of delta, epsilon (inner tolerance), sigma
    (bandwidth), gamma (kernel regularizer).  Returns one comparison
    row per (value, solver).
    """
    rows = []
    for value in values:
        cfg = replace(base)
        if param == "delta":
            pc = _precond_for(base)
            cfg = replace(base, precond_config=replace(pc, delta=float(value)))
        elif param == "epsilon":
            pc = _precond_for(base)
            cfg = replace(base,
                          precond_config=replace(pc, inner_tolerance=float(value)))
        elif param == "sigma":
            cfg = replace(base, spec=replace(base.spec, bandwidth=float(value)))
        elif param == "gamma":
            cfg = replace(base, spec=replace(base.spec, regularizer=float(value)))
        else:
            raise InvalidInputError(
                f"unknown sweep parameter {param!r}; "
                "expected delta, epsilon, sigma or gamma")
        report = run_experiment(cfg)
        for row in report.rows:
            rows.append({"param": param, "value": value, **row})
    return rows
