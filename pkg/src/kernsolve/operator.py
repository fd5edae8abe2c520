"""Matrix-free regularized kernel operator.

The operator represents K = Khat + gamma*I and exposes only
matrix-vector products; kernel entries are generated on the fly in row
blocks, so memory stays O(N * d) no matter how many products run.

Reduced precision mode rounds the block kernel values and the input
vector to float32 and accumulates the row sums in float32 before
widening, emulating a single-precision accelerator product.  The
diagonal gamma*q shift is always applied in full precision.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError
from .kernels import Dataset, KernelSpec, kernel_block

WORKERS_ENV = "KERNSOLVE_WORKERS"

DEFAULT_BLOCK_SIZE = 256


class Precision(Enum):
    FULL = "full"
    REDUCED = "reduced"


def worker_count() -> int:
    """Worker cap for the blocked MVP, from $KERNSOLVE_WORKERS."""
    raw = os.environ.get(WORKERS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


class MvpCounter:
    """Thread-safe tally of matrix-vector products per precision mode."""

    def __init__(self):
        self._lock = threading.Lock()
        self.full = 0
        self.reduced = 0

    def bump(self, mode: Precision):
        with self._lock:
            if mode is Precision.FULL:
                self.full += 1
            else:
                self.reduced += 1

    def snapshot(self):
        with self._lock:
            return (self.full, self.reduced)


class KernelOperator:
    """Implicit K = Khat + gamma*I over a dataset, MVP-only access.

    Safely shareable read-only across workers; the MVP counter is the
    only mutable state and is lock-protected.
    """

    def __init__(self, data: Dataset, spec: KernelSpec,
                 precision: Precision = Precision.FULL,
                 block_size: int = DEFAULT_BLOCK_SIZE,
                 counter: MvpCounter = None):
        self.data = data
        self.spec = spec
        self.precision = precision
        self.block_size = int(block_size)
        self.counter = counter if counter is not None else MvpCounter()

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def shape(self):
        return (self.n, self.n)

    def shifted(self, delta: float, precision: Precision = None) -> "KernelOperator":
        """Operator for M = Khat + (gamma + delta)*I sharing this counter."""
        spec = self.spec.with_regularizer(self.spec.regularizer + delta)
        prec = self.precision if precision is None else precision
        return KernelOperator(self.data, spec, precision=prec,
                              block_size=self.block_size, counter=self.counter)

    def _block_rows(self, lo: int, hi: int, q: np.ndarray) -> np.ndarray:
        pts = self.data.points
        if self.precision is Precision.FULL:
            return kernel_block(self.spec, pts[lo:hi], pts) @ q
        kb = kernel_block(self.spec, pts[lo:hi], pts, dtype=np.float32)
        return (kb @ q.astype(np.float32)).astype(np.float64)

    def matvec(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float).ravel()
        n = self.n
        if q.shape[0] != n:
            raise InvalidInputError(f"vector length {q.shape[0]} != N={n}")
        if not np.all(np.isfinite(q)):
            raise InvalidInputError("input vector has non-finite entries")
        blocks = [(lo, min(lo + self.block_size, n))
                  for lo in range(0, n, self.block_size)]
        out = np.empty(n)
        nworkers = min(worker_count(), len(blocks))
        if nworkers > 1 and n >= 4 * self.block_size:
            with ThreadPoolExecutor(max_workers=nworkers) as pool:
                for (lo, hi), res in zip(
                        blocks, pool.map(lambda b: self._block_rows(b[0], b[1], q),
                                         blocks)):
                    out[lo:hi] = res
        else:
            for lo, hi in blocks:
                out[lo:hi] = self._block_rows(lo, hi, q)
        if self.spec.regularizer:
            out += self.spec.regularizer * q
        self.counter.bump(self.precision)
        return out

    __call__ = matvec

    def dense(self, dense_cap: int = None) -> np.ndarray:
        """Explicit matrix, for oracles and small direct solves only."""
        from .kernels import DEFAULT_DENSE_CAP, build_dense_kernel
        cap = DEFAULT_DENSE_CAP if dense_cap is None else dense_cap
        return build_dense_kernel(self.data, self.spec, dense_cap=cap)


def kernel_mvp(op: KernelOperator, q: np.ndarray) -> np.ndarray:
    """Functional alias for ``op.matvec(q)``."""
    return op.matvec(q)


@dataclass
class _CountingOperator:
    """Adapter giving plain matrices/callables a matvec + counter surface."""

    _fn: object
    n: int
    counter: MvpCounter = None

    def __post_init__(self):
        if self.counter is None:
            self.counter = MvpCounter()

    def matvec(self, q):
        q = np.asarray(q, dtype=float).ravel()
        self.counter.bump(Precision.FULL)
        return np.asarray(self._fn(q), dtype=float).ravel()


def as_operator(a, n: int = None):
    """Normalize an ndarray / callable / operator to the matvec protocol.

    KernelOperator instances pass through untouched (keeping their shared
    counter); everything else is wrapped with a fresh full-precision
    counter.
    """
    if isinstance(a, (KernelOperator, _CountingOperator)):
        return a
    if isinstance(a, np.ndarray):
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInputError(f"operator matrix must be square, got {a.shape}")
        return _CountingOperator(lambda q, m=a: m @ q, a.shape[0])
    if hasattr(a, "matvec"):
        nn = getattr(a, "n", None) or getattr(a, "shape", (n,))[0] or n
        return _CountingOperator(a.matvec, nn)
    if callable(a):
        if n is None:
            raise InvalidInputError("callable operators need an explicit size n")
        return _CountingOperator(a, n)
    raise InvalidInputError(f"cannot interpret {type(a)!r} as a linear operator")
