"""Exception hierarchy for the warped GP toolkit."""

from typing import Optional, Sequence

import numpy as np


class BcgpError(Exception):
    """Base error for all toolkit failures."""
    pass


class WarpingDomainError(BcgpError, ValueError):
    """A value lies outside the domain of a warping."""
    pass


class QuadratureRangeError(WarpingDomainError):
    """A Gauss-Hermite node fell outside the inverse warping's domain."""

    def __init__(self, message: str, node: float):
        super().__init__(f"{message} (node={node!r})")
        self.node = node


class SingularityError(BcgpError, ArithmeticError):
    """Evaluation hit a singular point (zero derivative or λx + 1 = 0)."""

    def __init__(self, message: str, value: Optional[float] = None):
        if value is not None:
            message = f"{message} (value={value!r})"
        super().__init__(message)
        self.value = value


class ConditioningError(BcgpError, np.linalg.LinAlgError):
    """Cholesky factorization failed at every jitter level."""

    def __init__(self, message: str, jitter_levels: Sequence[float] = ()):
        levels = ", ".join(f"{j:.1e}" for j in jitter_levels)
        super().__init__(f"{message}; attempted jitter levels: [{levels}]")
        self.jitter_levels = list(jitter_levels)


class ConvergenceError(BcgpError, ArithmeticError):
    """An iterative solver ran out of iterations."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class InitializationError(BcgpError):
    """No walker of an ensemble starts at a finite log-probability."""
    pass


class ConfigError(BcgpError):
    """Experiment configuration is invalid."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class DataError(BcgpError):
    """Dataset file could not be read or validated."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column
