"""Exceptions raised by hgmnet."""

from __future__ import annotations


class HgmError(Exception):
    """Base class for all hgmnet errors."""


class DimensionMismatchError(HgmError):
    """Array arguments have inconsistent shapes."""


class ConstantColumnError(HgmError):
    """A column has zero variance and cannot be standardized."""

    def __init__(self, column: int):
        self.column = int(column)
        super().__init__(f"column {self.column} is constant")


class NonFiniteError(HgmError):
    """A matrix contains NaN or infinite entries."""

    def __init__(self, where: str):
        self.where = where
        super().__init__(f"non-finite value at {where}")


class NotPositiveDefiniteError(HgmError):
    """A matrix required to be positive definite is not."""


class SingularSystemError(HgmError):
    """A linear system required by an update could not be factorized."""


class ZeroDiagonalError(HgmError):
    """A Gram matrix has a zero diagonal entry, so column problems are ill-posed."""

    def __init__(self, index: int):
        self.index = int(index)
        super().__init__(f"Gram matrix has zero diagonal at index {self.index}")


class MaxIterExceededError(HgmError):
    """An iterative solver ran out of iterations before reaching tolerance.

    Carries the best iterate seen (``best``) and its residual (``residual``).
    """

    def __init__(self, message: str, best=None, residual: float = float("inf")):
        self.best = best
        self.residual = float(residual)
        super().__init__(message)


class KTooLargeError(HgmError):
    """More groups requested than there are columns to assign."""


class InvalidBlockStructureError(HgmError):
    """Requested block-diagonal structure does not tile the matrix."""


class AllRestartsFailedError(HgmError):
    """Every restart of the alternating solver raised an error."""

    def __init__(self, errors):
        self.errors = list(errors)
        msgs = "; ".join(f"restart {i}: {e}" for i, e in enumerate(self.errors))
        super().__init__(f"all {len(self.errors)} restarts failed ({msgs})")


class AllGridPointsFailedError(HgmError):
    """Every point of a selection grid failed to fit."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__(f"all {len(self.errors)} grid points failed")


class MatrixParseError(HgmError):
    """A matrix file could not be parsed."""


class NonRectangularError(MatrixParseError):
    """Rows of a matrix file have unequal lengths."""

    def __init__(self, row: int, expected: int, got: int):
        self.row = int(row)
        super().__init__(f"row {row} has {got} fields, expected {expected}")
