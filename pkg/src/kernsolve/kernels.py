"""Datasets, kernel functions and explicit (dense) kernel matrices.

Two kernel families ship: the Gaussian kernel

    k(x, y) = exp(-||x - y||^2 / (2 sigma^2))

and the Matern-3/2 kernel

    k(x, y) = (1 + sqrt(3) r) exp(-sqrt(3) r),   r = ||x - y|| / h,

where the bandwidth slot of :class:`KernelSpec` holds sigma or h
respectively.  The regularized system matrix everywhere in this package
is K = Khat + gamma*I with Khat the raw kernel matrix.

Duplicate points are allowed; they make Khat singular but K stays
positive definite whenever gamma > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from numba import njit

from .errors import InvalidInputError, ResourceLimitError

SQRT3 = np.sqrt(3.0)

DEFAULT_DENSE_CAP = 10_000


class KernelFamily(Enum):
    GAUSSIAN = "gaussian"
    MATERN32 = "matern32"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters (bandwidth, regularizer gamma)."""

    family: KernelFamily = KernelFamily.GAUSSIAN
    bandwidth: float = 1.0
    regularizer: float = 0.0

    def __post_init__(self):
        if not (self.bandwidth > 0):
            raise InvalidInputError(f"bandwidth must be > 0, got {self.bandwidth}")
        if not (self.regularizer >= 0):
            raise InvalidInputError(f"regularizer must be >= 0, got {self.regularizer}")

    def with_regularizer(self, gamma: float) -> "KernelSpec":
        return KernelSpec(self.family, self.bandwidth, gamma)


@dataclass
class Dataset:
    """N points in R^d with optional scalar targets.

    points has shape (n, d), targets shape (n,) or None.  All values
    must be finite; targets, when present, match the point count.
    """

    points: np.ndarray
    targets: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(self.points, dtype=float)))
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise InvalidInputError(f"points must be (n, d) with d >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("points contain non-finite values")
        object.__setattr__(self, "points", pts)
        if self.targets is not None:
            tgt = np.asarray(self.targets, dtype=float).ravel()
            if tgt.shape[0] != pts.shape[0]:
                raise InvalidInputError(
                    f"targets count {tgt.shape[0]} != point count {pts.shape[0]}")
            if not np.all(np.isfinite(tgt)):
                raise InvalidInputError("targets contain non-finite values")
            object.__setattr__(self, "targets", tgt)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def _sqdist_block(xa: np.ndarray, xb: np.ndarray, out_dtype=np.float64) -> np.ndarray:
    """Pairwise squared distances between xa (m, d) and xb (n, d).

    Accumulates (xa_k - xb_k)^2 one coordinate at a time: O(m*n) temporaries
    and no ||x||^2 expansion, so near-duplicate points do not cancel.
    """
    xa = xa.astype(out_dtype, copy=False)
    xb = xb.astype(out_dtype, copy=False)
    sq = np.zeros((xa.shape[0], xb.shape[0]), dtype=out_dtype)
    for k in range(xa.shape[1]):
        diff = xa[:, k, None] - xb[None, :, k]
        sq += diff * diff
    return sq


@njit(cache=True)
def _gauss_block_jit(xa, xb, two_sigma2, out):  # pragma: no cover - jitted
    m, d = xa.shape
    n = xb.shape[0]
    for i in range(m):
        for j in range(n):
            sq = xa[i, 0] - xa[i, 0]  # typed zero matching the input dtype
            for k in range(d):
                diff = xa[i, k] - xb[j, k]
                sq += diff * diff
            out[i, j] = np.exp(-sq / two_sigma2)


@njit(cache=True)
def _matern_block_jit(xa, xb, bandwidth, sqrt3, out):  # pragma: no cover
    m, d = xa.shape
    n = xb.shape[0]
    for i in range(m):
        for j in range(n):
            sq = xa[i, 0] - xa[i, 0]
            for k in range(d):
                diff = xa[i, k] - xb[j, k]
                sq += diff * diff
            t = sqrt3 * (np.sqrt(sq) / bandwidth)
            out[i, j] = (1.0 + t) * np.exp(-t)


def kernel_block(spec: KernelSpec, xa: np.ndarray, xb: np.ndarray,
                 dtype=np.float64) -> np.ndarray:
    """Dense block of raw kernel values k(xa_i, xb_j), no regularizer.

    Fused jitted loop: squared distances accumulate one coordinate at a
    time (no ||x||^2 expansion, so near-duplicate points do not cancel)
    and no (m, n) temporaries are materialized.
    """
    xa = np.ascontiguousarray(xa, dtype=dtype)
    xb = np.ascontiguousarray(xb, dtype=dtype)
    out = np.empty((xa.shape[0], xb.shape[0]), dtype=dtype)
    if spec.family is KernelFamily.GAUSSIAN:
        two_sigma2 = dtype(2.0) * dtype(spec.bandwidth) ** 2
        _gauss_block_jit(xa, xb, two_sigma2, out)
    else:
        _matern_block_jit(xa, xb, dtype(spec.bandwidth), dtype(SQRT3), out)
    return out


def eval_kernel(spec: KernelSpec, xi, xj) -> float:
    """Evaluate k(xi, xj) for a single pair of points.

    Raises InvalidInputError on dimension mismatch.  The result lies in
    (0, 1] for both shipped families.
    """
    xi = np.asarray(xi, dtype=float).ravel()
    xj = np.asarray(xj, dtype=float).ravel()
    if xi.shape != xj.shape:
        raise InvalidInputError(f"dimension mismatch: {xi.shape[0]} vs {xj.shape[0]}")
    return float(kernel_block(spec, xi[None, :], xj[None, :])[0, 0])


def build_dense_kernel(data: Dataset, spec: KernelSpec,
                       dense_cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Explicit regularized kernel matrix K = Khat + gamma*I.

    Computes the upper triangle and mirrors it, so the result is exactly
    symmetric.  Guarded by ``dense_cap`` against O(N^2) blowup.
    """
    n = data.n
    if n > dense_cap:
        raise ResourceLimitError(f"N={n} exceeds dense cap {dense_cap}")
    k = kernel_block(spec, data.points, data.points)
    k = np.triu(k)
    k = k + np.triu(k, 1).T
    if spec.regularizer:
        k[np.diag_indices(n)] += spec.regularizer
    return k


def build_cross_kernel(test_points: np.ndarray, train: Dataset,
                       spec: KernelSpec) -> np.ndarray:
    """Dense (n_test, n_train) matrix of raw kernel values (no gamma)."""
    test_points = np.atleast_2d(np.asarray(test_points, dtype=float))
    if test_points.shape[1] != train.d:
        raise InvalidInputError(
            f"test dimension {test_points.shape[1]} != train dimension {train.d}")
    return kernel_block(spec, test_points, train.points)


def cross_kernel_mvp(test_points: np.ndarray, train: Dataset, spec: KernelSpec,
                     alpha: np.ndarray, block_size: int = 256) -> np.ndarray:
    """Matrix-free sum_i alpha_i k(x_i, x*_j) over a block of test points."""
    test_points = np.atleast_2d(np.asarray(test_points, dtype=float))
    if test_points.shape[1] != train.d:
        raise InvalidInputError(
            f"test dimension {test_points.shape[1]} != train dimension {train.d}")
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.shape[0] != train.n:
        raise InvalidInputError("weight vector length does not match training size")
    out = np.empty(test_points.shape[0])
    for lo in range(0, test_points.shape[0], block_size):
        hi = min(lo + block_size, test_points.shape[0])
        out[lo:hi] = kernel_block(spec, test_points[lo:hi], train.points) @ alpha
    return out
