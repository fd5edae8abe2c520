"""Exception types shared across the package."""


class KernsolveError(Exception):
    """Base class for all package errors."""


class InvalidInputError(KernsolveError, ValueError):
    """Malformed or inconsistent user input (shapes, signs, dimensions)."""


class ResourceLimitError(KernsolveError):
    """A dense-path operation exceeded the configured size cap."""


class NotPositiveDefiniteError(KernsolveError):
    """Cholesky hit a non-positive pivot: the matrix is not SPD
    (typically the regularizer is too small, or duplicate points with
    zero regularization)."""


class FactorizationBreakdownError(KernsolveError):
    """Incomplete factorization hit an unrecoverable zero pivot."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class SolverBreakdownError(KernsolveError):
    """Numerical breakdown inside a Krylov solver (indefinite operator,
    singular least-squares triangle)."""


class DivergenceError(KernsolveError):
    """Residual became non-finite during iteration."""


class PreconditionerFailureError(KernsolveError):
    """Preconditioner returned a non-finite vector."""


class InvalidOperatorError(KernsolveError):
    """Operator failed a structural probe (e.g. symmetry check)."""


class FitError(KernsolveError):
    """Regression fit failed to converge; carries the solver trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class CsvParseError(KernsolveError):
    """Malformed CSV row; carries the 1-based line number."""

    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptyDatasetError(KernsolveError):
    """Ingestion produced no usable rows."""
