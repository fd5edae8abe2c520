"""Explicit-matrix baseline solvers.

Direct Cholesky solution and a threshold-sparsified incomplete LU
(zero-fill on the sparsified pattern).  Both need the dense matrix, so
they only run below the dense size cap; they exist as comparison
baselines for the matrix-free solvers, not as scalable paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular

from .errors import (FactorizationBreakdownError, InvalidInputError,
                     NotPositiveDefiniteError)

DEFAULT_DROP_THRESHOLD = 1e-2

_SYM_TOL = 1e-12


@dataclass
class CholeskyFactor:
    """Lower-triangular L with K = L L^T."""

    lower: np.ndarray

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = solve_triangular(self.lower, b, lower=True)
        return solve_triangular(self.lower.T, y, lower=False)


def _check_symmetric(k: np.ndarray):
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise InvalidInputError(f"matrix must be square, got shape {k.shape}")
    scale = max(np.abs(k).max(), 1.0)
    if np.abs(k - k.T).max() > _SYM_TOL * scale:
        raise InvalidInputError("matrix is not symmetric within 1e-12")
    return k


def cholesky_factor(k: np.ndarray) -> CholeskyFactor:
    k = _check_symmetric(k)
    try:
        lower = np.linalg.cholesky(k)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "Cholesky failed: matrix not positive definite "
            "(regularizer too small, or duplicate points with gamma=0)") from exc
    return CholeskyFactor(lower)


def cholesky_solve(k: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve K X = B for SPD K; B may hold multiple right-hand sides."""
    return cholesky_factor(k).solve(np.asarray(b, dtype=float))


@njit(cache=True)
def _ilu0_inplace(a, pat, pivot_sub):  # pragma: no cover - compiled
    n = a.shape[0]
    n_perturbed = 0
    first_bad = -1
    for i in range(n):
        for k in range(i):
            if not pat[i, k]:
                continue
            lik = a[i, k] / a[k, k]
            a[i, k] = lik
            for j in range(k + 1, n):
                if pat[i, j]:
                    a[i, j] -= lik * a[k, j]
        if abs(a[i, i]) <= 1e-300:
            if pivot_sub == 0.0:
                if first_bad < 0:
                    first_bad = i
                a[i, i] = 1.0  # keep going so the caller can report
            else:
                a[i, i] = pivot_sub
                n_perturbed += 1
    return n_perturbed, first_bad


@dataclass
class IncompleteFactor:
    """ILU(0) factors of the threshold-sparsified matrix.

    ``lu`` packs unit-lower L (strict lower part) and U (upper incl.
    diagonal) into one dense array; the fill pattern is exactly the
    sparsified-matrix pattern.  ``perturbed`` counts pivots that were
    replaced to avoid breakdown.
    """

    lu: np.ndarray
    pattern: np.ndarray
    drop_threshold: float
    perturbed: int = 0
    _lower: np.ndarray = field(default=None, repr=False)
    _upper: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.lu.shape[0]

    @property
    def retained_offdiagonals(self) -> int:
        return int(self.pattern.sum()) - self.n

    def __post_init__(self):
        self._lower = np.tril(self.lu, -1) + np.eye(self.n)
        self._upper = np.triu(self.lu)


def ilu_factor(k: np.ndarray, drop_threshold: float = DEFAULT_DROP_THRESHOLD
               ) -> IncompleteFactor:
    """Threshold-sparsify then factor with zero fill-in.

    Off-diagonal entries with |k_ij| < tau * max|k_ij| are dropped; the
    diagonal is always kept.  On a zero pivot the factorization
    substitutes tau * max|k_ij| and flags the factor as perturbed;
    with tau = 0 no substitute exists and a breakdown error is raised.
    """
    if drop_threshold < 0:
        raise InvalidInputError(f"drop threshold must be >= 0, got {drop_threshold}")
    k = np.array(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise InvalidInputError(f"matrix must be square, got shape {k.shape}")
    max_abs = np.abs(k).max()
    cut = drop_threshold * max_abs
    pat = np.abs(k) >= cut
    np.fill_diagonal(pat, True)
    a = np.where(pat, k, 0.0)
    n_pert, first_bad = _ilu0_inplace(a, pat, cut)
    if first_bad >= 0:
        raise FactorizationBreakdownError(
            f"zero pivot at position {first_bad} with no substitute (tau=0)",
            position=first_bad)
    return IncompleteFactor(a, pat, drop_threshold, perturbed=int(n_pert))


def ilu_apply(factor: IncompleteFactor, v: np.ndarray) -> np.ndarray:
    """Apply M^{-1} v = U^{-1} (L^{-1} v) by two triangular solves."""
    v = np.asarray(v, dtype=float).ravel()
    if v.shape[0] != factor.n:
        raise InvalidInputError(f"vector length {v.shape[0]} != N={factor.n}")
    y = solve_triangular(factor._lower, v, lower=True, unit_diagonal=True)
    return solve_triangular(factor._upper, y, lower=False)
