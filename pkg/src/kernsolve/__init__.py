"""Matrix-free Krylov solvers for dense kernel regression."""

__version__ = "0.1.0"

from .errors import (CsvParseError, DivergenceError, EmptyDatasetError,
                     FactorizationBreakdownError, FitError, InvalidInputError,
                     InvalidOperatorError, KernsolveError,
                     NotPositiveDefiniteError, PreconditionerFailureError,
                     ResourceLimitError, SolverBreakdownError)
from .kernels import (DEFAULT_DENSE_CAP, Dataset, KernelFamily, KernelSpec,
                      build_cross_kernel, build_dense_kernel, cross_kernel_mvp,
                      eval_kernel)
from .operator import (KernelOperator, MvpCounter, Precision, as_operator,
                       kernel_mvp, worker_count)
from .baselines import (CholeskyFactor, IncompleteFactor, cholesky_factor,
                        cholesky_solve, ilu_apply, ilu_factor)
from .solvers import (ArnoldiState, ConvergenceTrace, ExactDensePreconditioner,
                      IdentityPreconditioner, ILUPreconditioner,
                      InnerCGPreconditioner, Preconditioner,
                      PreconditionerConfig, ResidualNorm, SolverConfig,
                      Termination, cg, default_preconditioner_config, fcg,
                      fgmres, gmres, hessenberg_lstsq,
                      regularized_kernel_preconditioner)
from .diagnostics import ConditionEstimate, cg_bound, estimate_condition
from .regression import (PredictionResult, RegressionModel, SolverKind, fit,
                         log_marginal_likelihood, ml_grid_search, predict,
                         predict_mean, predict_variance, simple_krige)
from .data_io import (CsvSchema, IngestResult, generate_synthetic, ingest_csv,
                      write_dataset_csv)
from .experiments import (ExperimentConfig, ExperimentReport, emit_outputs,
                          run_experiment, run_sweep)
