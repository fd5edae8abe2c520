"""Condition-number estimation and the CG convergence bound.

Extreme eigenvalues are estimated by Lanczos with full
reorthogonalization from a seeded start vector, so repeated calls give
identical estimates.  For very small eigenvalues Lanczos converges
slowly; the result carries a ``converged`` flag and small problems
should prefer a dense eigensolve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import InvalidInputError, InvalidOperatorError
from .operator import as_operator

_LANCZOS_SEED = 0x5EED
_RITZ_RTOL = 1e-6


@dataclass
class ConditionEstimate:
    lambda_max: float
    lambda_min: float
    kappa: float
    lanczos_steps: int
    converged: bool


def _check_symmetric(op, n: int, rng: np.random.Generator):
    u = rng.standard_normal(n)
    v = rng.standard_normal(n)
    au = op.matvec(u)
    av = op.matvec(v)
    lhs = float(u @ av)
    rhs = float(v @ au)
    scale = abs(lhs) + abs(rhs) + 1.0
    if abs(lhs - rhs) > 1e-8 * scale:
        raise InvalidOperatorError(
            f"operator failed symmetry probe: |u'Av - v'Au| = {abs(lhs - rhs):.3e}")


def estimate_condition(a, steps: int = None, n: int = None) -> ConditionEstimate:
    """Estimate kappa = lambda_max / lambda_min of a symmetric operator.

    Runs ``steps`` Lanczos iterations (default min(N, 200)) with full
    reorthogonalization and returns the extreme Ritz values; converged
    is set once successive Ritz extremes move by less than 1e-6
    relative.
    """
    op = as_operator(a, n=n)
    nn = op.n
    if steps is None:
        steps = min(nn, 200)
    if steps < 2:
        raise InvalidInputError("estimate_condition needs steps >= 2")
    steps = min(steps, nn)

    rng = np.random.default_rng(_LANCZOS_SEED)
    _check_symmetric(op, nn, rng)

    v = rng.standard_normal(nn)
    v /= np.linalg.norm(v)
    basis = np.empty((steps + 1, nn))
    basis[0] = v
    alphas = []
    betas = []
    prev = None
    converged = False
    k_done = 0
    for k in range(steps):
        w = op.matvec(basis[k])
        if k > 0:
            w -= betas[-1] * basis[k - 1]
        alpha = float(basis[k] @ w)
        w -= alpha * basis[k]
        # full reorthogonalization keeps the Ritz extremes trustworthy
        w -= basis[:k + 1].T @ (basis[:k + 1] @ w)
        alphas.append(alpha)
        k_done = k + 1
        beta = float(np.linalg.norm(w))
        if k_done >= 2:
            ritz = eigh_tridiagonal(np.asarray(alphas), np.asarray(betas),
                                    eigvals_only=True)
            ext = (float(ritz[-1]), float(ritz[0]))
            if prev is not None and prev[1] != 0:
                if (abs(ext[0] - prev[0]) <= _RITZ_RTOL * abs(prev[0])
                        and abs(ext[1] - prev[1]) <= _RITZ_RTOL * abs(prev[1])):
                    converged = True
                    prev = ext
                    break
            prev = ext
        if beta <= 1e-14 * max(abs(alpha), 1.0):
            converged = True  # invariant subspace: Ritz values exact
            break
        betas.append(beta)
        basis[k + 1] = w / beta

    if prev is None:
        prev = (alphas[0], alphas[0])
    lam_max, lam_min = prev
    kappa = lam_max / lam_min if lam_min > 0 else math.inf
    return ConditionEstimate(lambda_max=lam_max, lambda_min=lam_min,
                             kappa=kappa, lanczos_steps=k_done,
                             converged=converged)


def cg_bound(kappa: float, k: int) -> float:
    """Classical CG error bound 2 ((sqrt(kappa)-1)/(sqrt(kappa)+1))^k,
    a cap on the K-norm error ratio ||e_k||_K / ||e_0||_K."""
    if kappa < 1:
        raise InvalidInputError(f"kappa must be >= 1, got {kappa}")
    if k < 0:
        raise InvalidInputError(f"k must be >= 0, got {k}")
    rho = (math.sqrt(kappa) - 1.0) / (math.sqrt(kappa) + 1.0)
    return 2.0 * rho ** k
