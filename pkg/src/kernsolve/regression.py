"""Gaussian process regression and simple kriging on the solver layer.

The fit solves (Khat + gamma I) alpha = y by a selectable solver
(direct Cholesky, CG, FGMRES, FCG, or ILU-preconditioned CG); the
posterior mean at x* is sum_i alpha_i k(x_i, x*) and the variance is
k(x*, x*) - k(x*)' s with (Khat + gamma I) s = k(x*).  A zero-mean
prior is assumed throughout; optional target centering is available as
a flag.

Hyperparameters can be picked by a grid search maximizing the Gaussian
log marginal likelihood on a seeded subset of the data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .baselines import DEFAULT_DROP_THRESHOLD, cholesky_factor, ilu_factor
from .errors import FitError, InvalidInputError
from .kernels import (DEFAULT_DENSE_CAP, Dataset, KernelSpec,
                      build_cross_kernel, build_dense_kernel, cross_kernel_mvp)
from .operator import KernelOperator, MvpCounter, Precision
from .solvers import (ConvergenceTrace, ILUPreconditioner, Preconditioner,
                      PreconditionerConfig, SolverConfig, Termination, cg,
                      default_preconditioner_config, fcg, fgmres,
                      regularized_kernel_preconditioner)

_VARIANCE_BATCH = 16
_ML_SUBSET_SEED = 1234


class SolverKind(Enum):
    DIRECT = "direct"
    CG = "cg"
    FGMRES = "fgmres"
    FCG = "fcg"
    ILU_CG = "ilu-cg"


@dataclass
class RegressionModel:
    train: Dataset
    spec: KernelSpec
    weights: np.ndarray
    solver_used: SolverKind
    trace: Optional[ConvergenceTrace]
    solver_config: Optional[SolverConfig] = None
    precond_config: Optional[PreconditionerConfig] = None
    dense_cap: int = DEFAULT_DENSE_CAP
    # direct-path factor, reused for batched variance solves
    _factor: object = None


@dataclass
class PredictionResult:
    mean: np.ndarray
    variance: Optional[np.ndarray] = None


def _solve_system(train: Dataset, spec: KernelSpec, rhs: np.ndarray,
                  solver: SolverKind, cfg: SolverConfig,
                  pcfg: Optional[PreconditionerConfig], dense_cap: int,
                  counter: MvpCounter = None, factor=None):
    """One solve of (Khat + gamma I) x = rhs along the chosen path."""
    if solver is SolverKind.DIRECT:
        factor = factor or cholesky_factor(
            build_dense_kernel(train, spec, dense_cap=dense_cap))
        return factor.solve(rhs), None, factor
    op = KernelOperator(train, spec, counter=counter or MvpCounter())
    if solver is SolverKind.CG:
        x, trace = cg(op, rhs, cfg)
    elif solver is SolverKind.FGMRES:
        pcfg = pcfg or default_preconditioner_config(spec.regularizer,
                                                     cfg.outer_tolerance)
        precond = regularized_kernel_preconditioner(op, pcfg)
        x, trace = fgmres(op, precond, rhs, cfg)
    elif solver is SolverKind.FCG:
        pcfg = pcfg or default_preconditioner_config(spec.regularizer,
                                                     cfg.outer_tolerance)
        precond = regularized_kernel_preconditioner(op, pcfg)
        x, trace = fcg(op, precond, rhs, cfg)
    elif solver is SolverKind.ILU_CG:
        factor = factor or ilu_factor(
            build_dense_kernel(train, spec, dense_cap=dense_cap),
            DEFAULT_DROP_THRESHOLD)
        x, trace = fcg(op, ILUPreconditioner(factor), rhs, cfg)
    else:
        raise InvalidInputError(f"unknown solver {solver!r}")
    return x, trace, factor


def fit(train: Dataset, spec: KernelSpec,
        solver: SolverKind = SolverKind.FGMRES,
        solver_config: SolverConfig = None,
        precond_config: PreconditionerConfig = None,
        dense_cap: int = DEFAULT_DENSE_CAP,
        center_targets: bool = False) -> RegressionModel:
    """Solve the regularized kernel system for the weight vector alpha."""
    if train.targets is None:
        raise InvalidInputError("training dataset has no targets")
    cfg = solver_config or SolverConfig()
    y = train.targets.copy()
    if center_targets:
        y -= y.mean()
    alpha, trace, factor = _solve_system(train, spec, y, solver, cfg,
                                         precond_config, dense_cap)
    if trace is not None and trace.termination is not Termination.CONVERGED:
        raise FitError(
            f"{solver.value} did not converge "
            f"(termination={trace.termination}, residual={trace.final_residual:.3e})",
            trace=trace)
    if not np.all(np.isfinite(alpha)):
        raise FitError("fit produced non-finite weights", trace=trace)
    return RegressionModel(train=train, spec=spec, weights=alpha,
                           solver_used=solver, trace=trace,
                           solver_config=cfg, precond_config=precond_config,
                           dense_cap=dense_cap, _factor=factor)


def predict_mean(model: RegressionModel, test: Dataset) -> np.ndarray:
    """Posterior mean sum_i alpha_i k(x_i, x*), matrix-free over blocks."""
    return cross_kernel_mvp(test.points, model.train, model.spec, model.weights)


def predict_variance(model: RegressionModel, test: Dataset) -> np.ndarray:
    """Posterior variance k(x*,x*) - k(x*)' (Khat + gamma I)^{-1} k(x*).

    The self term uses the raw kernel (no gamma), i.e. the noise-free
    latent variance; k(x*,x*) = 1 for both shipped kernel families.
    One linear solve per test point, batched on the direct path and
    processed in blocks of 16 otherwise.  Small negative values from
    solver noise are clamped to zero; values below -1e-8 trigger a
    warning before clamping.
    """
    kstar = build_cross_kernel(test.points, model.train, model.spec)  # (nt, n)
    cfg = model.solver_config or SolverConfig()
    out = np.empty(test.n)
    if model.solver_used is SolverKind.DIRECT:
        factor = model._factor or cholesky_factor(
            build_dense_kernel(model.train, model.spec, dense_cap=model.dense_cap))
        s = factor.solve(kstar.T)  # (n, nt)
        out = 1.0 - np.einsum("ij,ji->i", kstar, s)
    else:
        counter = MvpCounter()
        factor = None
        for lo in range(0, test.n, _VARIANCE_BATCH):
            hi = min(lo + _VARIANCE_BATCH, test.n)
            for t in range(lo, hi):
                s, _, factor = _solve_system(
                    model.train, model.spec, kstar[t], model.solver_used, cfg,
                    model.precond_config, model.dense_cap, counter=counter,
                    factor=factor)
                out[t] = 1.0 - float(kstar[t] @ s)
    if out.min() < -1e-8:
        warnings.warn(f"clamping negative posterior variance "
                      f"(min {out.min():.3e})", stacklevel=2)
    return np.maximum(out, 0.0)


def predict(model: RegressionModel, test: Dataset,
            with_variance: bool = False) -> PredictionResult:
    mean = predict_mean(model, test)
    var = predict_variance(model, test) if with_variance else None
    return PredictionResult(mean=mean, variance=var)


def simple_krige(train: Dataset, spec: KernelSpec, test: Dataset,
                 solver: SolverKind = SolverKind.FGMRES,
                 solver_config: SolverConfig = None,
                 precond_config: PreconditionerConfig = None,
                 dense_cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Simple kriging: y* = k(x*)' (Khat + gamma I)^{-1} y.

    Identical computation path to fit + predict_mean.
    """
    model = fit(train, spec, solver=solver, solver_config=solver_config,
                precond_config=precond_config, dense_cap=dense_cap)
    return predict_mean(model, test)


def log_marginal_likelihood(train: Dataset, spec: KernelSpec,
                            dense_cap: int = DEFAULT_DENSE_CAP) -> float:
    """Gaussian log evidence -y'K^{-1}y/2 - log|K|/2 - n log(2 pi)/2
    via dense Cholesky."""
    if train.targets is None:
        raise InvalidInputError("dataset has no targets")
    k = build_dense_kernel(train, spec, dense_cap=dense_cap)
    factor = cholesky_factor(k)
    alpha = factor.solve(train.targets)
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor.lower))))
    n = train.n
    return -0.5 * float(train.targets @ alpha) - 0.5 * logdet \
        - 0.5 * n * math.log(2.0 * math.pi)


def ml_grid_search(train: Dataset, bandwidth_grid: Sequence[float],
                   regularizer_grid: Sequence[float],
                   subset_size: int = None, family=None,
                   seed: int = _ML_SUBSET_SEED) -> KernelSpec:
    """Pick (bandwidth, gamma) maximizing the log marginal likelihood on
    a seeded uniform subsample (default min(N, 1000) points).

    Grid points where Cholesky fails score -inf with a warning; exact
    ties break toward the larger regularizer (better conditioning).
    """
    if train.targets is None:
        raise InvalidInputError("dataset has no targets")
    if not len(bandwidth_grid) or not len(regularizer_grid):
        raise InvalidInputError("grids must be non-empty")
    if subset_size is None:
        subset_size = min(train.n, 1000)
    if subset_size > train.n:
        raise InvalidInputError(f"subset_size {subset_size} > N={train.n}")
    from .kernels import KernelFamily
    family = family or KernelFamily.GAUSSIAN
    rng = np.random.default_rng(seed)
    idx = rng.choice(train.n, size=subset_size, replace=False)
    sub = Dataset(train.points[idx], train.targets[idx])

    best = None  # (ll, gamma, spec)
    for bw in bandwidth_grid:
        for gamma in regularizer_grid:
            spec = KernelSpec(family, float(bw), float(gamma))
            try:
                ll = log_marginal_likelihood(sub, spec)
            except Exception as exc:  # non-PD grid point
                warnings.warn(f"grid point (bw={bw}, gamma={gamma}) failed: {exc}",
                              stacklevel=2)
                ll = -math.inf
            if (best is None or ll > best[0]
                    or (ll == best[0] and gamma > best[1])):
                best = (ll, gamma, spec)
    return best[2]
