"""Matrix-free Krylov solvers and flexible preconditioning.

Solvers: ``cg`` (plain conjugate gradients), ``gmres`` (restarted,
modified Gram-Schmidt), ``fgmres`` (flexible right-preconditioned
GMRES, where the preconditioner may change per step), and ``fcg``
(flexible CG with full direction reorthogonalization).

The centerpiece preconditioner solves M z = v with M = Khat +
(gamma + delta) I by a truncated inner CG, reusing the same matrix-free
kernel product as the outer solver (optionally in reduced precision).
The outer flexible methods tolerate the inexact inner solves.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from .baselines import IncompleteFactor, cholesky_factor, ilu_apply
from .errors import (DivergenceError, InvalidInputError,
                     PreconditionerFailureError, SolverBreakdownError)
from .operator import KernelOperator, Precision, as_operator


class ResidualNorm(Enum):
    #: ||r||_2 / ||b||_2 (absolute when b = 0)
    TWO_NORM = "two_norm"
    #: ||r||_2 / N, the stopping measure used in the benchmark studies
    TWO_NORM_OVER_N = "two_norm_over_n"


class Termination(Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    BREAKDOWN = "breakdown"
    STAGNATION = "stagnation"


@dataclass
class SolverConfig:
    outer_tolerance: float = 1e-6
    max_outer_iterations: int = 5000
    restart_length: int = 50  # GMRES / FGMRES only
    residual_norm_mode: ResidualNorm = ResidualNorm.TWO_NORM

    def __post_init__(self):
        if not (self.outer_tolerance > 0):
            raise InvalidInputError("outer_tolerance must be > 0")
        if self.restart_length < 1:
            raise InvalidInputError("restart_length must be >= 1")
        if self.max_outer_iterations < 1:
            raise InvalidInputError("max_outer_iterations must be >= 1")


@dataclass
class PreconditionerConfig:
    """Inner-solve settings for the regularized-kernel preconditioner."""

    delta: float = 1e-2
    inner_tolerance: float = 1e-4
    max_inner_iterations: Optional[int] = None  # None -> N
    inner_precision: Precision = Precision.REDUCED

    def __post_init__(self):
        if not (self.delta > 0):
            raise InvalidInputError("delta must be > 0")
        if not (self.inner_tolerance > 0):
            raise InvalidInputError("inner_tolerance must be > 0")


def default_preconditioner_config(kernel_regularizer: float,
                                  outer_tolerance: float,
                                  inner_precision: Precision = Precision.REDUCED
                                  ) -> PreconditionerConfig:
    """Parameter rules used when the caller does not override:

    inner tolerance one order of magnitude looser than the outer one,
    delta one order of magnitude above the kernel regularizer (1e-3
    when the kernel regularizer is zero).
    """
    delta = 10.0 * kernel_regularizer if kernel_regularizer > 0 else 1e-3
    return PreconditionerConfig(delta=delta,
                                inner_tolerance=10.0 * outer_tolerance,
                                inner_precision=inner_precision)


@dataclass
class ConvergenceTrace:
    """Per-outer-iteration history of one solver run.

    ``residuals[k]`` is the stopping-rule residual measure after k outer
    steps (entry 0 is the initial residual); the counter lists are
    cumulative and non-decreasing.
    """

    residuals: List[float] = field(default_factory=list)
    full_mvps: List[int] = field(default_factory=list)
    reduced_mvps: List[int] = field(default_factory=list)
    inner_iterations: List[int] = field(default_factory=list)
    wall_times: List[float] = field(default_factory=list)
    termination: Optional[Termination] = None
    arnoldi: Optional[list] = None
    iterates: Optional[list] = None

    @property
    def iterations(self) -> int:
        return max(len(self.residuals) - 1, 0)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else math.nan

    @property
    def total_inner_iterations(self) -> int:
        return self.inner_iterations[-1] if self.inner_iterations else 0

    def record(self, residual, full, reduced, inner, elapsed):
        self.residuals.append(float(residual))
        self.full_mvps.append(int(full))
        self.reduced_mvps.append(int(reduced))
        self.inner_iterations.append(int(inner))
        self.wall_times.append(float(elapsed))


@dataclass
class ArnoldiState:
    """Snapshot of one Arnoldi cycle: basis V, Hessenberg Hbar,
    preconditioned vectors Z (flexible runs; equals V otherwise), and
    the cycle's initial residual norm beta."""

    basis: np.ndarray       # (n, k+1)
    hessenberg: np.ndarray  # (k+1, k)
    z: np.ndarray           # (n, k)
    beta: float


class Preconditioner:
    """Black-box routine returning an (approximate) solution of M z = v."""

    #: cumulative inner-solver iterations spent inside apply()
    inner_iterations: int = 0

    def apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def description(self) -> dict:
        return {"kind": type(self).__name__}


class IdentityPreconditioner(Preconditioner):
    def apply(self, v):
        return v

    @property
    def description(self):
        return {"kind": "identity"}


class ExactDensePreconditioner(Preconditioner):
    """Exact solve with an explicit SPD matrix M (testing / small N)."""

    def __init__(self, m: np.ndarray):
        self._factor = cholesky_factor(m)

    def apply(self, v):
        return self._factor.solve(v)

    @property
    def description(self):
        return {"kind": "exact-dense", "n": self._factor.lower.shape[0]}


class ILUPreconditioner(Preconditioner):
    """Thresholded incomplete-LU apply, M^{-1} v by triangular solves."""

    def __init__(self, factor: IncompleteFactor):
        self.factor = factor

    def apply(self, v):
        return ilu_apply(self.factor, v)

    @property
    def description(self):
        return {"kind": "ilu0", "drop_threshold": self.factor.drop_threshold,
                "perturbed": self.factor.perturbed}


class InnerCGPreconditioner(Preconditioner):
    """The regularized-kernel preconditioner M = Khat + (gamma+delta) I,
    applied by truncated CG on the same matrix-free kernel product.

    Each apply starts from z = 0 and runs to relative tolerance
    ``inner_tolerance`` or the iteration cap, whichever first; hitting
    the cap returns the best iterate (the flexible outer methods
    tolerate the inexact solve) and bumps ``cap_hits``.
    """

    def __init__(self, op: KernelOperator, config: PreconditionerConfig):
        self.config = config
        self.inner_op = op.shifted(config.delta, config.inner_precision)
        self.inner_iterations = 0
        self.cap_hits = 0
        cap = config.max_inner_iterations or op.n
        self._inner_cfg = SolverConfig(outer_tolerance=config.inner_tolerance,
                                       max_outer_iterations=cap,
                                       residual_norm_mode=ResidualNorm.TWO_NORM)

    def apply(self, v):
        if not np.any(v):
            return np.zeros_like(np.asarray(v, dtype=float))
        z, trace = cg(self.inner_op, v, self._inner_cfg,
                      raise_on_breakdown=False)
        self.inner_iterations += trace.iterations
        if trace.termination is Termination.MAX_ITERATIONS:
            self.cap_hits += 1
        return z

    @property
    def description(self):
        return {"kind": "inner-cg", "delta": self.config.delta,
                "inner_tolerance": self.config.inner_tolerance,
                "inner_precision": self.config.inner_precision.value,
                "cap_hits": self.cap_hits}


def regularized_kernel_preconditioner(op: KernelOperator,
                                      config: PreconditionerConfig
                                      ) -> InnerCGPreconditioner:
    """Build the inner-CG preconditioner for a kernel operator.

    The inner operator shares ``op``'s MVP counter, so reduced/full
    product tallies in outer traces account for inner work too.
    """
    return InnerCGPreconditioner(op, config)


# ---------------------------------------------------------------------------
# residual measure and bookkeeping helpers


def _measure(rnorm: float, bnorm: float, n: int, mode: ResidualNorm) -> float:
    if mode is ResidualNorm.TWO_NORM_OVER_N:
        return rnorm / n
    return rnorm / bnorm if bnorm > 0 else rnorm


class _Run:
    """Shared trace bookkeeping for one solver invocation."""

    def __init__(self, op, precond=None):
        self.op = op
        self.precond = precond
        self.t0 = time.perf_counter()
        self.full0, self.reduced0 = op.counter.snapshot()
        self.inner0 = precond.inner_iterations if precond is not None else 0
        self.trace = ConvergenceTrace()

    def record(self, residual_measure):
        full, reduced = self.op.counter.snapshot()
        inner = (self.precond.inner_iterations - self.inner0
                 if self.precond is not None else 0)
        self.trace.record(residual_measure, full - self.full0,
                          reduced - self.reduced0, inner,
                          time.perf_counter() - self.t0)


# ---------------------------------------------------------------------------
# conjugate gradients


def cg(a, b, cfg: SolverConfig = None, x0=None, record_iterates=False,
       raise_on_breakdown=True):
    """Unpreconditioned CG for an SPD operator; one MVP per iteration.

    Returns ``(x, trace)``.  Symmetry/definiteness is the caller's
    responsibility; a detected non-positive curvature raises a
    breakdown error (or terminates with Termination.BREAKDOWN when
    ``raise_on_breakdown`` is false, as the inner preconditioner solve
    does).
    """
    cfg = cfg or SolverConfig()
    b = np.asarray(b, dtype=float).ravel()
    op = as_operator(a, n=b.shape[0])
    n = b.shape[0]
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    run = _Run(op)
    trace = run.trace
    if record_iterates:
        trace.iterates = [x.copy()]

    r = b - op.matvec(x) if np.any(x) else b.copy()
    rnorm = float(np.linalg.norm(r))
    run.record(_measure(rnorm, bnorm, n, cfg.residual_norm_mode))
    if _measure(rnorm, bnorm, n, cfg.residual_norm_mode) <= cfg.outer_tolerance:
        trace.termination = Termination.CONVERGED
        return x, trace

    p = r.copy()
    rs = float(r @ r)
    for _ in range(cfg.max_outer_iterations):
        ap = op.matvec(p)
        pap = float(p @ ap)
        if not math.isfinite(pap) or pap <= 0:
            trace.termination = Termination.BREAKDOWN
            if raise_on_breakdown:
                err = SolverBreakdownError(
                    f"indefinite operator: p^T A p = {pap:.3e}")
                err.trace = trace
                raise err
            return x, trace
        alpha = rs / pap
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        rnorm = math.sqrt(rs_new)
        run.record(_measure(rnorm, bnorm, n, cfg.residual_norm_mode))
        if record_iterates:
            trace.iterates.append(x.copy())
        if not math.isfinite(rnorm):
            trace.termination = Termination.BREAKDOWN
            err = DivergenceError("residual became non-finite")
            err.trace = trace
            raise err
        if _measure(rnorm, bnorm, n, cfg.residual_norm_mode) <= cfg.outer_tolerance:
            trace.termination = Termination.CONVERGED
            return x, trace
        p = r + (rs_new / rs) * p
        rs = rs_new
    trace.termination = Termination.MAX_ITERATIONS
    return x, trace


# ---------------------------------------------------------------------------
# Hessenberg least squares (Givens rotations)


def _givens(a: float, b: float):
    d = math.hypot(a, b)
    if d == 0.0:
        return 1.0, 0.0
    return a / d, b / d


def hessenberg_lstsq(hbar: np.ndarray, beta: float):
    """Minimize ||beta*e1 - Hbar y||_2 for (k+1, k) upper-Hessenberg Hbar.

    Applies Givens rotations column by column; returns ``(y,
    residual_norm)`` with the exact minimum residual.  Raises a
    breakdown error when the reduced triangle is singular.
    """
    r = np.array(hbar, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1] + 1:
        raise InvalidInputError(f"expected (k+1, k) matrix, got {r.shape}")
    k = r.shape[1]
    g = np.zeros(k + 1)
    g[0] = float(beta)
    rot = []
    for j in range(k):
        for i, (c, s) in enumerate(rot):
            rij, rij1 = r[i, j], r[i + 1, j]
            r[i, j] = c * rij + s * rij1
            r[i + 1, j] = -s * rij + c * rij1
        c, s = _givens(r[j, j], r[j + 1, j])
        rot.append((c, s))
        r[j, j] = c * r[j, j] + s * r[j + 1, j]
        r[j + 1, j] = 0.0
        gj = g[j]
        g[j] = c * gj
        g[j + 1] = -s * gj
    diag = np.abs(np.diag(r[:k, :k]))
    scale = max(np.abs(r).max(), 1.0)
    if k and diag.min() <= 1e-300 * scale:
        raise SolverBreakdownError("singular reduced triangle in Hessenberg "
                                   "least squares")
    y = np.zeros(k)
    for j in range(k - 1, -1, -1):
        y[j] = (g[j] - r[j, j + 1:k] @ y[j + 1:k]) / r[j, j]
    return y, abs(float(g[k]))


# ---------------------------------------------------------------------------
# GMRES / flexible GMRES

_HAPPY_FACTOR = 1e-14


def _gmres_core(a, precond, b, cfg, x0, flexible, record_arnoldi):
    cfg = cfg or SolverConfig()
    b = np.asarray(b, dtype=float).ravel()
    n = b.shape[0]
    op = as_operator(a, n=n)
    precond = precond if precond is not None else IdentityPreconditioner()
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    run = _Run(op, precond)
    trace = run.trace
    if record_arnoldi:
        trace.arnoldi = []

    mode = cfg.residual_norm_mode
    m = cfg.restart_length
    steps = 0
    first_cycle = True
    while True:
        r = b - op.matvec(x) if np.any(x) else b.copy()
        beta = float(np.linalg.norm(r))
        if first_cycle:
            run.record(_measure(beta, bnorm, n, mode))
            first_cycle = False
        if _measure(beta, bnorm, n, mode) <= cfg.outer_tolerance:
            trace.termination = Termination.CONVERGED
            return x, trace
        if steps >= cfg.max_outer_iterations:
            trace.termination = Termination.MAX_ITERATIONS
            return x, trace

        v = np.zeros((n, m + 1))
        h = np.zeros((m + 1, m))
        z = np.zeros((n, m))
        v[:, 0] = r / beta
        k = 0
        converged = False
        for j in range(m):
            if steps >= cfg.max_outer_iterations:
                break
            zj = np.asarray(precond.apply(v[:, j]), dtype=float).ravel()
            if not np.all(np.isfinite(zj)):
                raise PreconditionerFailureError(
                    "preconditioner returned non-finite vector")
            w = op.matvec(zj)
            steps += 1
            # modified Gram-Schmidt, one extra pass on heavy cancellation
            wnorm0 = float(np.linalg.norm(w))
            for i in range(j + 1):
                hij = float(v[:, i] @ w)
                w -= hij * v[:, i]
                h[i, j] = hij
            if float(np.linalg.norm(w)) < 0.7 * wnorm0:
                for i in range(j + 1):
                    c = float(v[:, i] @ w)
                    w -= c * v[:, i]
                    h[i, j] += c
            hj1 = float(np.linalg.norm(w))
            h[j + 1, j] = hj1
            z[:, j] = zj
            k = j + 1
            happy = hj1 <= _HAPPY_FACTOR * beta
            if not happy:
                v[:, j + 1] = w / hj1
            _, res = hessenberg_lstsq(h[:k + 1, :k], beta)
            run.record(_measure(res, bnorm, n, mode))
            if happy or _measure(res, bnorm, n, mode) <= cfg.outer_tolerance:
                converged = True
                break

        if k > 0:
            y, _ = hessenberg_lstsq(h[:k + 1, :k], beta)
            update_basis = z[:, :k] if flexible else v[:, :k]
            x = x + update_basis @ y
            if record_arnoldi:
                trace.arnoldi.append(ArnoldiState(
                    basis=v[:, :k + 1].copy(), hessenberg=h[:k + 1, :k].copy(),
                    z=z[:, :k].copy(), beta=beta))
        if converged:
            trace.termination = Termination.CONVERGED
            return x, trace
        # restart: x0 = x_iter, GOTO top


def gmres(a, b, cfg: SolverConfig = None, x0=None, record_arnoldi=False):
    """Restarted GMRES (modified Gram-Schmidt Arnoldi, Givens residual
    monitoring).  Returns ``(x, trace)``."""
    return _gmres_core(a, None, b, cfg, x0, flexible=False,
                       record_arnoldi=record_arnoldi)


def fgmres(a, precond: Preconditioner, b, cfg: SolverConfig = None, x0=None,
           record_arnoldi=False):
    """Flexible right-preconditioned GMRES.

    Per inner step j the preconditioner solves M_j z_j = v_j; the update
    uses the stored Z basis (x = x0 + Z y), so the preconditioner may
    change from step to step -- in particular it may itself be an
    iterative solver.  Restarts set x0 to the current iterate.
    """
    return _gmres_core(a, precond, b, cfg, x0, flexible=True,
                       record_arnoldi=record_arnoldi)


# ---------------------------------------------------------------------------
# flexible CG


def fcg(a, precond: Preconditioner, b, cfg: SolverConfig = None, x0=None):
    """Flexible CG: each new direction is explicitly re-orthogonalized
    (in the A-inner product) against the full stored direction history,
    so an inexact, varying preconditioner does not silently destroy
    conjugacy.  Stores all direction vectors.
    """
    cfg = cfg or SolverConfig()
    b = np.asarray(b, dtype=float).ravel()
    n = b.shape[0]
    op = as_operator(a, n=n)
    precond = precond if precond is not None else IdentityPreconditioner()
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    run = _Run(op, precond)
    trace = run.trace
    mode = cfg.residual_norm_mode

    r = b - op.matvec(x) if np.any(x) else b.copy()
    rnorm = float(np.linalg.norm(r))
    run.record(_measure(rnorm, bnorm, n, mode))
    if _measure(rnorm, bnorm, n, mode) <= cfg.outer_tolerance:
        trace.termination = Termination.CONVERGED
        return x, trace

    dirs = []  # (p, Ap, p^T A p) history for reorthogonalization
    nondecreasing = 0
    for _ in range(cfg.max_outer_iterations):
        zk = np.asarray(precond.apply(r), dtype=float).ravel()
        if not np.all(np.isfinite(zk)):
            raise PreconditionerFailureError(
                "preconditioner returned non-finite vector")
        qk = op.matvec(zk)
        pk = zk.copy()
        qk = qk.copy()
        for pi, qi, piqi in dirs:
            coef = float(qi @ zk) / piqi
            pk -= coef * pi
            qk -= coef * qi
        pq = float(pk @ qk)
        if not math.isfinite(pq) or pq <= 0:
            trace.termination = Termination.BREAKDOWN
            err = SolverBreakdownError(f"indefinite operator: p^T A p = {pq:.3e}")
            err.trace = trace
            raise err
        alpha = float(pk @ r) / pq
        x += alpha * pk
        r -= alpha * qk
        dirs.append((pk, qk, pq))
        new_rnorm = float(np.linalg.norm(r))
        run.record(_measure(new_rnorm, bnorm, n, mode))
        if not math.isfinite(new_rnorm):
            trace.termination = Termination.BREAKDOWN
            err = DivergenceError("residual became non-finite")
            err.trace = trace
            raise err
        if _measure(new_rnorm, bnorm, n, mode) <= cfg.outer_tolerance:
            trace.termination = Termination.CONVERGED
            return x, trace
        nondecreasing = nondecreasing + 1 if new_rnorm >= rnorm else 0
        if nondecreasing >= 3:
            trace.termination = Termination.STAGNATION
            return x, trace
        rnorm = new_rnorm
    trace.termination = Termination.MAX_ITERATIONS
    return x, trace
