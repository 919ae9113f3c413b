# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Exceptions."""


class WhiteningError(Exception):
    """Base exception for the whitening package."""


class UserError(WhiteningError):
    """Exception for invalid input supplied by the caller."""


class InternalError(WhiteningError):
    """Exception for failures of the fitting machinery."""


class NotPositiveDefinite(UserError):
    """Exception for matrices whose Cholesky factorization fails."""


class DimensionMismatch(UserError):
    """Exception for operands whose dimensions disagree."""


class FeatureDomainError(UserError):
    """Exception for feature values outside the unit box."""


class MissingTimestamps(UserError):
    """Exception for rolling predictors applied to data without an index."""


class InsufficientHistory(UserError):
    """Exception for rolling predictors evaluated before their warm-up."""


class SingularCovariance(UserError):
    """Exception for second-moment matrices that are not positive definite."""


class NonPositiveDiagonal(UserError):
    """Exception for whitener values with a non-positive diagonal entry."""


class InvalidMemory(UserError):
    """Exception for a moving-average memory smaller than the outcome dimension."""


class InvalidHalfLife(UserError):
    """Exception for a non-positive exponential half-life."""


class InvalidPermutation(UserError):
    """Exception for an order that is not a permutation."""


class DegenerateColumn(UserError):
    """Exception for constant columns that cannot be scaled."""


class ParseError(UserError):
    """Exception for CSV cells that cannot be parsed.

    Attributes:
        row: the 1-based data row number, or None for header errors.
        column: the offending column name.
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        """Initialize the exception.

        Args:
            message: the error message.
            row: the 1-based data row number.
            column: the offending column name.
        """
        super().__init__(message)
        self.row = row
        self.column = column


class RecipeError(UserError):
    """Exception for invalid recipe documents.

    Attributes:
        field: the path of the offending field.
    """

    def __init__(self, message: str, field: str = ""):
        """Initialize the exception.

        Args:
            message: the error message.
            field: the path of the offending field.
        """
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class SchemaError(UserError):
    """Exception for model documents that do not follow the schema."""


class VersionMismatch(UserError):
    """Exception for model documents written by an unsupported version."""


class SolverFailure(InternalError):
    """Exception for fits whose solver did not converge.

    Attributes:
        status: the final solver status.
    """

    def __init__(self, message: str, status: str):
        """Initialize the exception.

        Args:
            message: the error message.
            status: the final solver status.
        """
        super().__init__(message)
        self.status = status


class InvalidConfig(UserError):
    """Exception for fit settings out of their valid range."""


class InvalidHorizon(UserError):
    """Exception for prediction horizons smaller than one."""
