"""Benchmark command line: ``kernsolve {gen,solve,gpr,krige,sweep}``.

A config file of ``key = value`` lines (keys named like the long flags)
can seed any flag; explicit command-line flags win.  The worker count
for the blocked kernel product is capped by $KERNSOLVE_WORKERS.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .data_io import (DEFAULT_MISSING_SENTINEL, CsvSchema, generate_synthetic,
                      ingest_csv, write_dataset_csv)
from .errors import InvalidInputError, KernsolveError
from .experiments import (COMPARISON_COLUMNS, ExperimentConfig, emit_outputs,
                          run_experiment, run_sweep)
from .kernels import DEFAULT_DENSE_CAP, Dataset, KernelFamily, KernelSpec
from .operator import Precision
from .regression import SolverKind, fit, ml_grid_search, predict, simple_krige
from .solvers import PreconditionerConfig, ResidualNorm, SolverConfig


def _float_list(raw: str):
    return [float(v) for v in raw.split(",") if v.strip()]


def _str_list(raw: str):
    return [v.strip() for v in raw.split(",") if v.strip()]


def _add_kernel_flags(p):
    p.add_argument("--kernel", choices=[f.value for f in KernelFamily],
                   default="gaussian", help="kernel family")
    p.add_argument("--bandwidth", "--sigma", type=float, default=1.0,
                   help="kernel bandwidth (sigma / h)")
    p.add_argument("--gamma", type=float, default=1e-2,
                   help="kernel regularizer")


def _add_solver_flags(p):
    p.add_argument("--tol", type=float, default=1e-6, help="outer tolerance")
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--restart", type=int, default=50, help="GMRES restart length")
    p.add_argument("--residual-mode", choices=["rel2", "over-n"],
                   default="over-n",
                   help="stopping measure: ||r||/||b|| or ||r||/N")
    p.add_argument("--delta", type=float, default=None,
                   help="preconditioner regularizer (default: 10*gamma, "
                        "or 1e-3 when gamma = 0)")
    p.add_argument("--inner-tol", type=float, default=None,
                   help="inner CG tolerance (default: 10*tol)")
    p.add_argument("--max-inner", type=int, default=None,
                   help="inner CG iteration cap (default: N)")
    p.add_argument("--precision", choices=["full", "reduced"], default="reduced",
                   help="inner MVP precision mode")
    p.add_argument("--dense-cap", type=int, default=DEFAULT_DENSE_CAP)


def _add_dataset_flags(p):
    p.add_argument("--csv", default=None, help="dataset CSV (header row)")
    p.add_argument("--features", default=None,
                   help="comma-separated feature column names "
                        "(default: all but target)")
    p.add_argument("--target", default=None, help="target column name")
    p.add_argument("--missing", default=DEFAULT_MISSING_SENTINEL,
                   help="missing-value sentinel string")
    p.add_argument("--no-scale", action="store_true",
                   help="skip per-column min-max feature scaling")
    p.add_argument("--n", type=int, default=1000, help="synthetic point count")
    p.add_argument("--d", type=int, default=3, help="synthetic dimension")
    p.add_argument("--seed", type=int, default=0)


def _build_parser():
    parser = argparse.ArgumentParser(prog="kernsolve",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None,
                        help="key = value file seeding any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--d", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--no-targets", action="store_true")
    gen.add_argument("--out", required=True, help="output CSV path")

    solve = sub.add_parser("solve", help="solver shoot-out on one system")
    _add_dataset_flags(solve)
    _add_kernel_flags(solve)
    _add_solver_flags(solve)
    solve.add_argument("--solvers", default="cg,fgmres",
                       help="comma list: direct,cg,gmres,fgmres,fcg,ilu-cg")
    solve.add_argument("--drop-threshold", type=float, default=1e-2)
    solve.add_argument("--rhs", choices=["xtrue", "targets"], default="xtrue")
    solve.add_argument("--out", required=True, help="output directory")

    sweep = sub.add_parser("sweep", help="delta/epsilon/sigma/gamma sweep")
    _add_dataset_flags(sweep)
    _add_kernel_flags(sweep)
    _add_solver_flags(sweep)
    sweep.add_argument("--solvers", default="fgmres")
    sweep.add_argument("--drop-threshold", type=float, default=1e-2)
    sweep.add_argument("--rhs", choices=["xtrue", "targets"], default="xtrue")
    sweep.add_argument("--param", required=True,
                       choices=["delta", "epsilon", "sigma", "gamma"])
    sweep.add_argument("--values", required=True,
                       help="comma-separated parameter values")
    sweep.add_argument("--out", required=True, help="output directory")

    gpr = sub.add_parser("gpr", help="Gaussian process regression")
    _add_dataset_flags(gpr)
    _add_kernel_flags(gpr)
    _add_solver_flags(gpr)
    gpr.add_argument("--solver", default="fgmres",
                     choices=[k.value for k in SolverKind])
    gpr.add_argument("--test-csv", default=None,
                     help="prediction locations (default: seeded 10%% holdout)")
    gpr.add_argument("--holdout-frac", type=float, default=0.1)
    gpr.add_argument("--variance", action="store_true",
                     help="also compute the posterior variance")
    gpr.add_argument("--ml-bandwidth-grid", default=None,
                     help="comma grid; triggers marginal-likelihood search")
    gpr.add_argument("--ml-gamma-grid", default=None)
    gpr.add_argument("--ml-subset", type=int, default=None)
    gpr.add_argument("--out", required=True, help="output directory")

    krige = sub.add_parser("krige", help="simple kriging of missing values")
    _add_dataset_flags(krige)
    _add_kernel_flags(krige)
    _add_solver_flags(krige)
    krige.add_argument("--solver", default="fgmres",
                       choices=[k.value for k in SolverKind])
    krige.add_argument("--out", required=True, help="output directory")
    return parser


def _apply_config_file(parser, argv):
    """Inject config-file values as flag defaults; CLI flags override."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    path = argv[idx + 1]
    pairs = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"{path}: bad config line {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            pairs[key.replace("-", "_")] = value
    # prepend as flags so later explicit flags win
    injected = []
    for key, value in pairs.items():
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes", "on"):
            injected.append(flag)
        else:
            injected.extend([flag, value])
    rest = argv[:idx] + argv[idx + 2:]
    if rest and not rest[0].startswith("-"):
        return [rest[0]] + injected + rest[1:]
    return injected + rest


def _schema_from_args(args) -> CsvSchema:
    return CsvSchema(
        feature_columns=_str_list(args.features) if args.features else [],
        target_column=args.target,
        missing_sentinel=args.missing,
        scale_features=not args.no_scale)


def _spec_from_args(args) -> KernelSpec:
    return KernelSpec(KernelFamily(args.kernel), args.bandwidth, args.gamma)


def _solver_config_from_args(args) -> SolverConfig:
    mode = (ResidualNorm.TWO_NORM_OVER_N if args.residual_mode == "over-n"
            else ResidualNorm.TWO_NORM)
    return SolverConfig(outer_tolerance=args.tol,
                        max_outer_iterations=args.max_iters,
                        restart_length=args.restart,
                        residual_norm_mode=mode)


def _precond_config_from_args(args) -> "PreconditionerConfig | None":
    if args.delta is None and args.inner_tol is None and args.max_inner is None \
            and args.precision == "reduced":
        return None  # fall back to the parameter rules
    gamma = args.gamma
    delta = args.delta if args.delta is not None else \
        (10.0 * gamma if gamma > 0 else 1e-3)
    inner_tol = args.inner_tol if args.inner_tol is not None else 10.0 * args.tol
    return PreconditionerConfig(delta=delta, inner_tolerance=inner_tol,
                                max_inner_iterations=args.max_inner,
                                inner_precision=Precision(args.precision))


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        n=args.n, d=args.d, seed=args.seed,
        csv_path=args.csv,
        csv_schema=_schema_from_args(args) if args.csv else None,
        spec=_spec_from_args(args),
        solvers=_str_list(args.solvers),
        solver_config=_solver_config_from_args(args),
        precond_config=_precond_config_from_args(args),
        rhs_mode=args.rhs,
        drop_threshold=args.drop_threshold,
        dense_cap=args.dense_cap)


def _cmd_gen(args):
    data = generate_synthetic(args.n, args.d, args.seed,
                              targets=not args.no_targets)
    write_dataset_csv(args.out, data)
    print(f"wrote {args.out}: n={data.n}, d={data.d}, "
          f"targets={'no' if args.no_targets else 'yes'}")
    return 0


def _cmd_solve(args):
    report = run_experiment(_experiment_config(args))
    emit_outputs(report, args.out)
    for row in report.rows:
        print(f"{row['solver']:>8}: outer={row['outer_iters']} "
              f"inner={row['inner_iters']} wall_ms={row['wall_ms']} "
              f"residual={row['final_residual']} agreement={row['agreement']}")
    print(f"outputs in {args.out}")
    return 0


def _cmd_sweep(args):
    rows = run_sweep(_experiment_config(args), args.param,
                     _float_list(args.values))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "sweep.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("param", "value") + COMPARISON_COLUMNS)
        for row in rows:
            writer.writerow([row["param"], row["value"]]
                            + [row[c] for c in COMPARISON_COLUMNS])
    for row in rows:
        print(f"{row['param']}={row['value']} {row['solver']}: "
              f"outer={row['outer_iters']} inner={row['inner_iters']}")
    print(f"wrote {path}")
    return 0


def _load_train_test(args):
    if args.csv:
        schema = _schema_from_args(args)
        if schema.target_column is None:
            raise InvalidInputError("--target is required with --csv")
        result = ingest_csv(args.csv, schema)
        train = result.dataset
        if args.test_csv:
            test_schema = CsvSchema(feature_columns=schema.feature_columns,
                                    target_column=None,
                                    missing_sentinel=schema.missing_sentinel,
                                    scale_features=schema.scale_features)
            test = ingest_csv(args.test_csv, test_schema).dataset
            return train, test
        rng = np.random.default_rng(args.seed)
        n_test = max(1, int(round(args.holdout_frac * train.n)))
        idx = rng.permutation(train.n)
        te, tr = idx[:n_test], idx[n_test:]
        return (Dataset(train.points[tr], train.targets[tr]),
                Dataset(train.points[te], train.targets[te]))
    full = generate_synthetic(args.n, args.d, args.seed)
    rng = np.random.default_rng(args.seed)
    n_test = max(1, int(round(args.holdout_frac * full.n)))
    idx = rng.permutation(full.n)
    te, tr = idx[:n_test], idx[n_test:]
    return (Dataset(full.points[tr], full.targets[tr]),
            Dataset(full.points[te], full.targets[te]))


def _cmd_gpr(args):
    train, test = _load_train_test(args)
    if args.ml_bandwidth_grid:
        spec = ml_grid_search(train,
                              _float_list(args.ml_bandwidth_grid),
                              _float_list(args.ml_gamma_grid or str(args.gamma)),
                              subset_size=args.ml_subset,
                              family=KernelFamily(args.kernel))
        print(f"ml grid search: bandwidth={spec.bandwidth}, "
              f"gamma={spec.regularizer}")
    else:
        spec = _spec_from_args(args)
    model = fit(train, spec, solver=SolverKind(args.solver),
                solver_config=_solver_config_from_args(args),
                precond_config=_precond_config_from_args(args),
                dense_cap=args.dense_cap)
    result = predict(model, test, with_variance=args.variance)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "predictions.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"x{i}" for i in range(test.d)] + ["mean"]
        if args.variance:
            header.append("variance")
        writer.writerow(header)
        for i in range(test.n):
            row = [repr(v) for v in test.points[i]] + [repr(result.mean[i])]
            if args.variance:
                row.append(repr(result.variance[i]))
            writer.writerow(row)
    if model.trace is not None:
        print(f"fit: {args.solver}, outer={model.trace.iterations}, "
              f"inner={model.trace.total_inner_iterations}, "
              f"residual={model.trace.final_residual:.3e}")
    if test.targets is not None:
        err = float(np.mean(np.abs(result.mean - test.targets)))
        print(f"holdout mean absolute error: {err:.6g}")
    print(f"wrote {path}")
    return 0


def _cmd_krige(args):
    if not args.csv:
        raise InvalidInputError("krige requires --csv")
    schema = _schema_from_args(args)
    if schema.target_column is None:
        raise InvalidInputError("--target is required for krige")
    result = ingest_csv(args.csv, schema, collect_missing_targets=True)
    if result.holdout is None or result.holdout.n == 0:
        raise InvalidInputError("no missing-target rows to interpolate")
    values = simple_krige(result.dataset, _spec_from_args(args), result.holdout,
                          solver=SolverKind(args.solver),
                          solver_config=_solver_config_from_args(args),
                          precond_config=_precond_config_from_args(args),
                          dense_cap=args.dense_cap)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "kriged.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(result.feature_names + [schema.target_column])
        for i in range(result.holdout.n):
            writer.writerow([repr(v) for v in result.holdout.points[i]]
                            + [repr(values[i])])
    print(f"interpolated {result.holdout.n} locations from "
          f"{result.dataset.n} observations; wrote {path}")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    argv = _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    handlers = {"gen": _cmd_gen, "solve": _cmd_solve, "sweep": _cmd_sweep,
                "gpr": _cmd_gpr, "krige": _cmd_krige}
    try:
        return handlers[args.command](args)
    except (KernsolveError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
