# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Packed lower-triangular matrices and triangular linear algebra.

Off-diagonal entries are packed row by row: (1, 0), (2, 0), (2, 1), (3, 0), ...
which is the order of ``numpy.tril_indices(n, -1)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .exceptions import DimensionMismatch, NonPositiveDiagonal, NotPositiveDefinite

PIVOT_TOLERANCE = 1e-13
SYMMETRY_TOLERANCE = 1e-12


def packed_size(n: int) -> int:
    """Get the number of strictly lower entries of an n-by-n matrix.

    Args:
        n: the matrix dimension.

    Returns:
        n(n-1)/2.
    """
    return n * (n - 1) // 2


def offdiag_indices(n: int) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
    """Get the row and column indices of the packed off-diagonal entries.

    Args:
        n: the matrix dimension.

    Returns:
        the row indices and the column indices, in packed order.
    """
    return np.tril_indices(n, -1)


def _frozen(values: ArrayLike) -> NDArray[np.float64]:
    """Copy values into a read-only float array.

    Args:
        values: the values to copy.

    Returns:
        a read-only float64 array.
    """
    array = np.array(values, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class LowerTriangular:
    """Lower-triangular matrix with a positive diagonal, stored packed.

    Attributes:
        diag: the n diagonal entries.
        offdiag: the n(n-1)/2 strictly lower entries in packed order.
    """

    diag: NDArray[np.float64]
    offdiag: NDArray[np.float64]

    def __post_init__(self) -> None:
        """Validate and freeze the packed entries.

        Raises:
            DimensionMismatch: if the entry counts are inconsistent.
            NonPositiveDiagonal: if a diagonal entry is not positive.
        """
        diag = _frozen(self.diag).reshape(-1)
        offdiag = _frozen(self.offdiag).reshape(-1)
        if diag.size == 0:
            raise DimensionMismatch("A triangular matrix needs at least one diagonal entry")
        if offdiag.size != packed_size(diag.size):
            raise DimensionMismatch(
                f"Expected {packed_size(diag.size)} off-diagonal entries for n={diag.size}, "
                f"got {offdiag.size}"
            )
        if not np.all(diag > 0):
            raise NonPositiveDiagonal(f"Diagonal entries must be positive, got {diag.tolist()}")
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", offdiag)

    @property
    def n(self) -> int:
        """Matrix dimension."""
        return int(self.diag.size)

    @classmethod
    def identity(cls, n: int) -> "LowerTriangular":
        """Build the identity matrix.

        Args:
            n: the matrix dimension.

        Returns:
            the n-by-n identity.
        """
        return cls(np.ones(n), np.zeros(packed_size(n)))

    @classmethod
    def from_dense(cls, matrix: ArrayLike) -> "LowerTriangular":
        """Pack the lower triangle of a dense square matrix.

        Args:
            matrix: the dense matrix; entries above the diagonal are ignored.

        Returns:
            the packed matrix.

        Raises:
            DimensionMismatch: if the matrix is not square.
        """
        dense = np.asarray(matrix, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise DimensionMismatch(f"Expected a square matrix, got shape {dense.shape}")
        return cls(np.diag(dense), dense[offdiag_indices(dense.shape[0])])

    def dense(self) -> NDArray[np.float64]:
        """Unpack into a dense matrix.

        Returns:
            the dense n-by-n lower-triangular matrix.
        """
        matrix = np.diag(self.diag)
        matrix[offdiag_indices(self.n)] = self.offdiag
        return matrix

    def logdet(self) -> float:
        """Get the log-determinant.

        Returns:
            the sum of the logarithms of the diagonal entries.
        """
        return float(np.sum(np.log(self.diag)))


@dataclass(frozen=True, eq=False)
class SymmetricPD:
    """Dense symmetric positive definite matrix.

    Attributes:
        entries: the n-by-n matrix.
    """

    entries: NDArray[np.float64]

    def __post_init__(self) -> None:
        """Validate and freeze the entries."""
        entries = _frozen(self.entries)
        _check_symmetric(entries)
        _factor(entries)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_factorization(cls, matrix: ArrayLike) -> "SymmetricPD":
        """Wrap a matrix built as a product of nonsingular triangular factors.

        Only symmetry is checked; the eigenvalues may span many decades.

        Args:
            matrix: the symmetric matrix.

        Returns:
            the wrapped matrix.
        """
        entries = _frozen(matrix)
        _check_symmetric(entries)
        wrapped = object.__new__(cls)
        object.__setattr__(wrapped, "entries", entries)
        return wrapped

    @property
    def n(self) -> int:
        """Matrix dimension."""
        return int(self.entries.shape[0])


def _check_symmetric(matrix: NDArray[np.float64]) -> None:
    """Check that a matrix is square and symmetric.

    Args:
        matrix: the matrix to check.

    Raises:
        DimensionMismatch: if the matrix is not square.
        NotPositiveDefinite: if the matrix is not symmetric.
    """
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
        raise DimensionMismatch(f"Expected a non-empty square matrix, got shape {matrix.shape}")
    scale = max(float(np.max(np.abs(matrix))), np.finfo(np.float64).tiny)
    if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOLERANCE * scale:
        raise NotPositiveDefinite("Matrix is not symmetric")


def _check_pivots(factor: NDArray[np.float64], matrix: NDArray[np.float64]) -> None:
    """Reject factorizations whose pivots are negligible at the scale of the input.

    Args:
        factor: the Cholesky factor, possibly stacked.
        matrix: the factorized matrix, possibly stacked.

    Raises:
        NotPositiveDefinite: if a pivot is not positive at the input scale.
    """
    pivots = np.diagonal(factor, axis1=-2, axis2=-1) ** 2
    scale = np.max(np.diagonal(matrix, axis1=-2, axis2=-1), axis=-1, keepdims=True)
    if np.any(pivots <= PIVOT_TOLERANCE * scale):
        raise NotPositiveDefinite("Matrix is not positive definite")


def _factor(matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    """Compute the dense lower Cholesky factor.

    Args:
        matrix: a symmetric matrix.

    Returns:
        the dense lower factor.

    Raises:
        NotPositiveDefinite: if the factorization fails.
    """
    try:
        factor = scipy.linalg.cholesky(matrix, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite("Matrix is not positive definite") from exc
    _check_pivots(factor, matrix)
    return factor


def cholesky(a: SymmetricPD | ArrayLike) -> LowerTriangular:
    """Compute the Cholesky factor L with L·Lᵀ = a.

    Args:
        a: the symmetric positive definite matrix.

    Returns:
        the lower-triangular factor.
    """
    matrix = a.entries if isinstance(a, SymmetricPD) else np.asarray(a, dtype=np.float64)
    _check_symmetric(matrix)
    return LowerTriangular.from_dense(_factor(matrix))


def _check_vector(factor: LowerTriangular, vector: ArrayLike) -> NDArray[np.float64]:
    """Convert a vector and check it matches the matrix dimension.

    Args:
        factor: the triangular matrix.
        vector: the vector.

    Returns:
        the vector as a float array.

    Raises:
        DimensionMismatch: if the dimensions disagree.
    """
    array = np.asarray(vector, dtype=np.float64)
    if array.shape != (factor.n,):
        raise DimensionMismatch(f"Expected a vector of length {factor.n}, got shape {array.shape}")
    return array


def whiten_vector(factor: LowerTriangular, y: ArrayLike) -> NDArray[np.float64]:
    """Whiten an outcome vector.

    Args:
        factor: the whitener value.
        y: the outcome.

    Returns:
        Lᵀy.
    """
    return factor.dense().T @ _check_vector(factor, y)


def solve_lower(factor: LowerTriangular, rhs: ArrayLike) -> NDArray[np.float64]:
    """Solve L·v = rhs by forward substitution.

    Args:
        factor: the triangular matrix.
        rhs: the right-hand side.

    Returns:
        the solution v.
    """
    return scipy.linalg.solve_triangular(factor.dense(), _check_vector(factor, rhs), lower=True)


def solve_lower_transpose(factor: LowerTriangular, rhs: ArrayLike) -> NDArray[np.float64]:
    """Solve Lᵀ·v = rhs by back substitution.

    Args:
        factor: the triangular matrix.
        rhs: the right-hand side.

    Returns:
        the solution v.
    """
    return scipy.linalg.solve_triangular(
        factor.dense(), _check_vector(factor, rhs), lower=True, trans="T"
    )


def covariance_from_whitener(factor: LowerTriangular) -> SymmetricPD:
    """Reconstruct the covariance (L·Lᵀ)⁻¹ from a whitener value.

    Args:
        factor: the whitener value.

    Returns:
        the covariance matrix.
    """
    inverse = scipy.linalg.solve_triangular(factor.dense(), np.eye(factor.n), lower=True)
    covariance = inverse.T @ inverse
    return SymmetricPD.from_factorization((covariance + covariance.T) / 2)


def precision_factor(sigma: SymmetricPD | ArrayLike) -> LowerTriangular:
    """Compute chol(Σ⁻¹) without forming Σ⁻¹.

    With J the reversal permutation and U = chol(JΣJ), the factor is J·U⁻ᵀ·J.

    Args:
        sigma: the covariance matrix.

    Returns:
        the lower Cholesky factor of the precision matrix.
    """
    matrix = sigma.entries if isinstance(sigma, SymmetricPD) else np.asarray(sigma, float)
    _check_symmetric(matrix)
    return LowerTriangular.from_dense(batch_precision_factor(matrix[None])[0])


def stack_dense(diag: NDArray[np.float64], offdiag: NDArray[np.float64]) -> NDArray[np.float64]:
    """Unpack stacked packed entries into dense lower-triangular matrices.

    Args:
        diag: diagonal entries, shape (m, n).
        offdiag: packed off-diagonal entries, shape (m, k).

    Returns:
        dense matrices of shape (m, n, n).
    """
    m, n = diag.shape
    rows, cols = offdiag_indices(n)
    dense = np.zeros((m, n, n))
    dense[:, np.arange(n), np.arange(n)] = diag
    dense[:, rows, cols] = offdiag
    return dense


def batch_solve_lower(
    factors: NDArray[np.float64], rhs: NDArray[np.float64], transpose: bool = False
) -> NDArray[np.float64]:
    """Solve stacked triangular systems L·v = rhs, or Lᵀ·v = rhs.

    Args:
        factors: dense lower-triangular matrices, shape (m, n, n).
        rhs: right-hand sides, shape (m, n) or (m, n, r).
        transpose: whether to solve with Lᵀ.

    Returns:
        the solutions, shaped like rhs.
    """
    vector = rhs.ndim == 2
    work = np.array(rhs[..., None] if vector else rhs, dtype=np.float64)
    n = factors.shape[-1]
    order = range(n - 1, -1, -1) if transpose else range(n)
    for j in order:
        if transpose:
            known = np.einsum("mk,mkr->mr", factors[:, j + 1 :, j], work[:, j + 1 :, :])
        else:
            known = np.einsum("mk,mkr->mr", factors[:, j, :j], work[:, :j, :])
        work[:, j, :] = (work[:, j, :] - known) / factors[:, j, j, None]
    return work[..., 0] if vector else work


def batch_cholesky(matrices: NDArray[np.float64]) -> NDArray[np.float64]:
    """Compute stacked dense lower Cholesky factors.

    Args:
        matrices: symmetric positive definite matrices, shape (m, n, n).

    Returns:
        the factors, shape (m, n, n).

    Raises:
        NotPositiveDefinite: if any factorization fails.
    """
    try:
        factors = np.linalg.cholesky(matrices)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Matrix is not positive definite") from exc
    _check_pivots(factors, matrices)
    return factors


def batch_precision_factor(sigmas: NDArray[np.float64]) -> NDArray[np.float64]:
    """Compute stacked chol(Σ⁻¹) by reversed factorization and triangular solves.

    Args:
        sigmas: covariance matrices, shape (m, n, n).

    Returns:
        dense lower factors of the precision matrices, shape (m, n, n).
    """
    reversed_factors = batch_cholesky(sigmas[:, ::-1, ::-1])
    identity = np.broadcast_to(np.eye(sigmas.shape[-1]), sigmas.shape)
    inverse = batch_solve_lower(reversed_factors, identity)
    return np.ascontiguousarray(np.swapaxes(inverse, 1, 2)[:, ::-1, ::-1])


def batch_covariance(factors: NDArray[np.float64]) -> NDArray[np.float64]:
    """Compute stacked covariances (L·Lᵀ)⁻¹ by triangular solves.

    Args:
        factors: dense lower-triangular whitener values, shape (m, n, n).

    Returns:
        the covariance matrices, shape (m, n, n).
    """
    identity = np.broadcast_to(np.eye(factors.shape[-1]), factors.shape)
    inverse = batch_solve_lower(factors, identity)
    covariance = np.swapaxes(inverse, 1, 2) @ inverse
    return (covariance + np.swapaxes(covariance, 1, 2)) / 2
