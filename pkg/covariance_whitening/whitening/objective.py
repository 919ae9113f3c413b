# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Log-likelihood, regularizers and gradients of the regression whitener."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from opentelemetry import trace

from . import settings
from .exceptions import DimensionMismatch, InvalidConfig, NonPositiveDiagonal
from .linalg import LowerTriangular, offdiag_indices, packed_size

if TYPE_CHECKING:
    from .whiteners import Dataset

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

LOG_2PI = math.log(2 * math.pi)


def _matrix(values: ArrayLike, rows: int, cols: int, name: str) -> NDArray[np.float64]:
    """Convert values into a read-only matrix of a given shape.

    Args:
        values: the values.
        rows: expected row count.
        cols: expected column count.
        name: the block name, for error messages.

    Returns:
        the read-only matrix.

    Raises:
        DimensionMismatch: if the shape is wrong.
    """
    array = np.array(values, dtype=np.float64)
    if array.size == 0 and rows * cols == 0:
        array = array.reshape(rows, cols)
    if array.shape != (rows, cols):
        raise DimensionMismatch(f"{name} must have shape {(rows, cols)}, got {array.shape}")
    array.setflags(write=False)
    return array


def _vector(values: ArrayLike, size: int, name: str) -> NDArray[np.float64]:
    """Convert values into a read-only vector of a given length.

    Args:
        values: the values.
        size: expected length.
        name: the block name, for error messages.

    Returns:
        the read-only vector.

    Raises:
        DimensionMismatch: if the length is wrong.
    """
    array = np.array(values, dtype=np.float64).reshape(-1)
    if array.shape != (size,):
        raise DimensionMismatch(f"{name} must have length {size}, got {array.shape[0]}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class RegressionParams:
    """Coefficients of the regression whitener.

    diag(L(x)) = Ax + b, offdiag(L(x)) = Cx + d and, for joint models, ν(x) = Ex + f.

    Attributes:
        A: diagonal coefficients, n×p.
        b: diagonal offsets, n.
        C: off-diagonal coefficients, k×p.
        d: off-diagonal offsets, k.
        E: mean coefficients, n×p, or None.
        f: mean offsets, n, or None.
    """

    A: NDArray[np.float64]  # noqa: N815
    b: NDArray[np.float64]
    C: NDArray[np.float64]  # noqa: N815
    d: NDArray[np.float64]
    E: NDArray[np.float64] | None = None  # noqa: N815
    f: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        """Validate the block shapes.

        Raises:
            DimensionMismatch: if the blocks disagree.
        """
        b = _vector(self.b, np.asarray(self.b).size, "b")
        n = b.size
        a_matrix = np.asarray(self.A, dtype=np.float64)
        p = a_matrix.shape[1] if a_matrix.ndim == 2 else 0
        k = packed_size(n)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", _matrix(self.A, n, p, "A"))
        object.__setattr__(self, "C", _matrix(self.C, k, p, "C"))
        object.__setattr__(self, "d", _vector(self.d, k, "d"))
        if (self.E is None) != (self.f is None):
            raise DimensionMismatch("E and f must be given together")
        if self.E is not None:
            object.__setattr__(self, "E", _matrix(self.E, n, p, "E"))
            object.__setattr__(self, "f", _vector(self.f, n, "f"))

    @property
    def n(self) -> int:
        """Outcome dimension."""
        return int(self.b.size)

    @property
    def p(self) -> int:
        """Feature dimension."""
        return int(self.A.shape[1])

    @property
    def k(self) -> int:
        """Number of strictly lower entries."""
        return packed_size(self.n)

    @property
    def has_mean(self) -> bool:
        """Whether the mean blocks are present."""
        return self.E is not None

    @property
    def parameter_count(self) -> int:
        """Number of scalar parameters."""
        return int(self.flatten().size)

    @classmethod
    def identity(cls, n: int, p: int, with_mean: bool = False) -> "RegressionParams":
        """Build the parameters of the constant identity whitener.

        Args:
            n: outcome dimension.
            p: feature dimension.
            with_mean: whether to include zero mean blocks.

        Returns:
            parameters with A=C=0, b=1, d=0 (and E=f=0).
        """
        k = packed_size(n)
        return cls(
            A=np.zeros((n, p)),
            b=np.ones(n),
            C=np.zeros((k, p)),
            d=np.zeros(k),
            E=np.zeros((n, p)) if with_mean else None,
            f=np.zeros(n) if with_mean else None,
        )

    def blocks(self) -> tuple[NDArray[np.float64], ...]:
        """Get the parameter blocks in canonical order.

        Returns:
            (A, b, C, d) followed by (E, f) when present.
        """
        core = (self.A, self.b, self.C, self.d)
        return core + (self.E, self.f) if self.E is not None else core  # type: ignore[operator]

    def flatten(self) -> NDArray[np.float64]:
        """Concatenate the blocks into one vector.

        Returns:
            the flat parameter vector.
        """
        return np.concatenate([block.reshape(-1) for block in self.blocks()])

    @classmethod
    def unflatten(
        cls, vector: ArrayLike, n: int, p: int, with_mean: bool = False
    ) -> "RegressionParams":
        """Rebuild parameters from a flat vector.

        Args:
            vector: the flat parameter vector.
            n: outcome dimension.
            p: feature dimension.
            with_mean: whether the vector carries the mean blocks.

        Returns:
            the parameters.
        """
        values = np.asarray(vector, dtype=np.float64)
        k = packed_size(n)
        shapes = [(n, p), (n,), (k, p), (k,)] + ([(n, p), (n,)] if with_mean else [])
        blocks = []
        offset = 0
        for shape in shapes:
            size = int(np.prod(shape))
            blocks.append(values[offset : offset + size].reshape(shape))
            offset += size
        if offset != values.size:
            raise DimensionMismatch(f"Expected {offset} parameters, got {values.size}")
        return cls(*blocks)

    def whitener(self, x: ArrayLike) -> LowerTriangular:
        """Evaluate L(x).

        Args:
            x: the feature vector.

        Returns:
            the whitener value.

        Raises:
            NonPositiveDiagonal: if a diagonal entry is not positive at x.
        """
        point = _vector(x, self.p, "x")
        diag = self.A @ point + self.b
        if not np.all(diag > 0):
            raise NonPositiveDiagonal(f"Diagonal of L(x) is not positive: {diag.tolist()}")
        return LowerTriangular(diag, self.C @ point + self.d)

    def mean_offset(self, x: ArrayLike) -> NDArray[np.float64]:
        """Evaluate ν(x), zero when the mean blocks are absent.

        Args:
            x: the feature vector.

        Returns:
            the offset ν(x).
        """
        point = _vector(x, self.p, "x")
        if self.E is None or self.f is None:
            return np.zeros(self.n)
        return self.E @ point + self.f


@dataclass(frozen=True)
class FitConfig:  # pylint: disable=too-many-instance-attributes
    """Settings of a regression fit.

    Attributes:
        epsilon: floor ε on the diagonal of L(x) over the feature box.
        lambda1: ridge weight on (A, C).
        lambda2: ridge weight on (b − 1, d).
        lambda_mean: ridge weight on (E, f).
        trace_weight: weight of the trace-inverse regularizer on the training data.
        max_iters: solver iteration limit.
        grad_tolerance: solver projected-gradient tolerance.
        lbfgs_memory: number of stored curvature pairs.
        threads: worker threads for the objective.
        fast_unconstrained: solve without the box constraint first.
    """

    epsilon: float = field(default_factory=lambda: settings.EPSILON)
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda_mean: float = 0.0
    trace_weight: float = 0.0
    max_iters: int = field(default_factory=lambda: settings.MAX_ITERS)
    grad_tolerance: float = field(default_factory=lambda: settings.GRAD_TOLERANCE)
    lbfgs_memory: int = field(default_factory=lambda: settings.LBFGS_MEMORY)
    threads: int = field(default_factory=lambda: settings.THREADS)
    fast_unconstrained: bool = False

    def __post_init__(self) -> None:
        """Validate the settings.

        Raises:
            InvalidConfig: if a setting is out of range.
        """
        if not self.epsilon > 0:
            raise InvalidConfig(f"epsilon must be positive, got {self.epsilon}")
        for name in ("lambda1", "lambda2", "lambda_mean", "trace_weight"):
            if not getattr(self, name) >= 0:
                raise InvalidConfig(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.max_iters < 1:
            raise InvalidConfig(f"max_iters must be at least 1, got {self.max_iters}")
        if not self.grad_tolerance > 0:
            raise InvalidConfig(f"grad_tolerance must be positive, got {self.grad_tolerance}")
        if self.lbfgs_memory < 1 or self.threads < 1:
            raise InvalidConfig("lbfgs_memory and threads must be at least 1")


class FeasibilityReport(NamedTuple):
    """Outcome of the diagonal feasibility check.

    Attributes:
        feasible: whether every row satisfies Σⱼ|Aᵢⱼ| ≤ bᵢ − ε.
        margin: the smallest bᵢ − ε − Σⱼ|Aᵢⱼ|.
        row: the row attaining the smallest margin.
    """

    feasible: bool
    margin: float
    row: int


def check_feasible(params: RegressionParams, epsilon: float) -> FeasibilityReport:
    """Check that Ax + b ≥ ε holds over the whole feature box.

    Args:
        params: the regression parameters.
        epsilon: the diagonal floor.

    Returns:
        the feasibility report.
    """
    row_norms = np.abs(params.A).sum(axis=1)
    margins = params.b - epsilon - row_norms
    row = int(np.argmin(margins))
    # Compared as ‖A‖ + ε ≤ b so the split encoding passes exactly in floating point.
    feasible = bool(np.all(row_norms + epsilon <= params.b))
    return FeasibilityReport(feasible, float(margins[row]), row)


def sample_loglik(params: RegressionParams, x: ArrayLike, y: ArrayLike) -> float:
    """Compute the log-likelihood of one sample.

    Args:
        params: the regression parameters.
        x: the feature vector.
        y: the outcome vector.

    Returns:
        −(n/2)log 2π + Σⱼ log L(x)ⱼⱼ − ½‖L(x)ᵀy − ν(x)‖².
    """
    factor = params.whitener(x)
    outcome = _vector(y, params.n, "y")
    residual = factor.dense().T @ outcome - params.mean_offset(x)
    return float(-params.n / 2 * LOG_2PI + factor.logdet() - 0.5 * residual @ residual)


def _residuals(
    params: RegressionParams,
    features: NDArray[np.float64],
    outcomes: NDArray[np.float64],
    diag: NDArray[np.float64],
    offdiag: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Compute the rows of L(x)ᵀy − ν(x) from stacked packed entries."""
    rows, cols = offdiag_indices(params.n)
    selector = np.zeros((rows.size, params.n))
    selector[np.arange(rows.size), cols] = 1.0
    residual = diag * outcomes + (offdiag * outcomes[:, rows]) @ selector
    if params.E is not None:
        residual = residual - (features @ params.E.T + params.f)
    return residual


class _Partial(NamedTuple):
    """Sums over one block of samples."""

    value: float
    grads: tuple[NDArray[np.float64], ...]
    trace: float
    trace_grads: tuple[NDArray[np.float64], ...]

    def combine(self, other: "_Partial") -> "_Partial":
        """Add another partial sum to this one."""
        return _Partial(
            self.value + other.value,
            tuple(a + b for a, b in zip(self.grads, other.grads)),
            self.trace + other.trace,
            tuple(a + b for a, b in zip(self.trace_grads, other.trace_grads)),
        )


def _block_terms(
    params: RegressionParams,
    features: NDArray[np.float64],
    outcomes: NDArray[np.float64],
    strict: bool,
) -> _Partial:
    """Sum the log-likelihood, its gradient and the trace terms over a block.

    The gradient with respect to L(x) is diag(1/Lⱼⱼ) − y·rᵀ restricted to the lower
    triangle, with r = L(x)ᵀy − ν(x); the gradient with respect to ν(x) is +r.

    Args:
        params: the regression parameters.
        features: block features, m×p.
        outcomes: block outcomes, m×n.
        strict: raise on a non-positive diagonal instead of returning −inf.

    Returns:
        the partial sums.

    Raises:
        NonPositiveDiagonal: in strict mode, if a diagonal entry is not positive.
    """
    n, m = params.n, features.shape[0]
    rows, cols = offdiag_indices(n)
    diag = features @ params.A.T + params.b
    if not np.all(diag > 0):
        if strict:
            raise NonPositiveDiagonal("Diagonal of L(x) is not positive on the data")
        return _Partial(-math.inf, tuple(np.zeros_like(b) for b in params.blocks()), 0.0, ())
    offdiag = features @ params.C.T + params.d
    residual = _residuals(params, features, outcomes, diag, offdiag)
    value = float(np.sum(np.log(diag)) - 0.5 * np.sum(residual**2) - m * n / 2 * LOG_2PI)
    grad_diag = 1.0 / diag - residual * outcomes
    grad_offdiag = -residual[:, cols] * outcomes[:, rows]
    grads = [
        grad_diag.T @ features,
        grad_diag.sum(axis=0),
        grad_offdiag.T @ features,
        grad_offdiag.sum(axis=0),
    ]
    if params.E is not None:
        grads += [residual.T @ features, residual.sum(axis=0)]
    trace = float(np.sum(diag**2) + np.sum(offdiag**2))
    trace_grads = (
        2 * diag.T @ features,
        2 * diag.sum(axis=0),
        2 * offdiag.T @ features,
        2 * offdiag.sum(axis=0),
    )
    return _Partial(value, tuple(grads), trace, trace_grads)


def _reduce(
    terms: Callable[[slice], _Partial], size: int, threads: int, chunk_rows: int
) -> _Partial:
    """Evaluate block terms and add them in block order.

    Args:
        terms: the per-block function.
        size: the number of samples.
        threads: worker threads.
        chunk_rows: the block size.

    Returns:
        the total.
    """
    blocks = [slice(start, min(start + chunk_rows, size)) for start in range(0, size, chunk_rows)]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(terms, blocks))
    else:
        parts = [terms(block) for block in blocks]
    total = parts[0]
    for part in parts[1:]:
        total = total.combine(part)
    return total


def ridge_penalty(params: RegressionParams, cfg: FitConfig) -> float:
    """Compute the ridge regularizer.

    Args:
        params: the regression parameters.
        cfg: the fit settings.

    Returns:
        λ₁(‖A‖² + ‖C‖²) + λ₂(‖b − 1‖² + ‖d‖²) + λ_mean(‖E‖² + ‖f‖²).
    """
    penalty = cfg.lambda1 * (np.sum(params.A**2) + np.sum(params.C**2)) + cfg.lambda2 * (
        np.sum((params.b - 1) ** 2) + np.sum(params.d**2)
    )
    if params.E is not None and params.f is not None:
        penalty += cfg.lambda_mean * (np.sum(params.E**2) + np.sum(params.f**2))
    return float(penalty)


def ridge_gradient(params: RegressionParams, cfg: FitConfig) -> RegressionParams:
    """Compute the gradient of the ridge regularizer.

    Args:
        params: the regression parameters.
        cfg: the fit settings.

    Returns:
        2λ₁(A, C), 2λ₂(b − 1, d) and 2λ_mean(E, f), shaped like the parameters.
    """
    has_mean = params.E is not None and params.f is not None
    return RegressionParams(
        A=2 * cfg.lambda1 * params.A,
        b=2 * cfg.lambda2 * (params.b - 1),
        C=2 * cfg.lambda1 * params.C,
        d=2 * cfg.lambda2 * params.d,
        E=2 * cfg.lambda_mean * params.E if has_mean else None,  # type: ignore[operator]
        f=2 * cfg.lambda_mean * params.f if has_mean else None,  # type: ignore[operator]
    )


def _check_data(params: RegressionParams, data: "Dataset") -> None:
    """Check the parameters match the dataset dimensions.

    Args:
        params: the regression parameters.
        data: the dataset.

    Raises:
        DimensionMismatch: if the dimensions disagree.
    """
    if (params.n, params.p) != (data.n, data.p):
        raise DimensionMismatch(
            f"Parameters have n={params.n}, p={params.p} but the data has "
            f"n={data.n}, p={data.p}"
        )


@tracer.start_as_current_span("value_and_gradient")
def value_and_gradient(
    params: RegressionParams, data: "Dataset", cfg: FitConfig, strict: bool = True
) -> tuple[float, RegressionParams]:
    """Compute the regularized objective and its gradient in one pass.

    Args:
        params: the regression parameters.
        data: the training data.
        cfg: the fit settings.
        strict: raise on a non-positive diagonal instead of returning −inf.

    Returns:
        the objective value and its gradient.
    """
    _check_data(params, data)
    size = data.size

    def terms(block: slice) -> _Partial:
        return _block_terms(params, data.features[block], data.outcomes[block], strict)

    total = _reduce(terms, size, cfg.threads, settings.CHUNK_ROWS)
    if not math.isfinite(total.value):
        return -math.inf, RegressionParams(*[np.zeros_like(b) for b in params.blocks()])
    ridge = ridge_gradient(params, cfg)
    grads = []
    for position, (grad, reg) in enumerate(zip(total.grads, ridge.blocks())):
        grad = grad / size - reg
        if position < 4 and cfg.trace_weight:
            grad = grad - cfg.trace_weight * total.trace_grads[position] / size
        grads.append(grad)
    value = total.value / size - ridge_penalty(params, cfg) - cfg.trace_weight * total.trace / size
    return value, RegressionParams(*grads)


@tracer.start_as_current_span("objective")
def objective(params: RegressionParams, data: "Dataset", cfg: FitConfig) -> float:
    """Compute the mean training log-likelihood minus the regularizer.

    Args:
        params: the regression parameters.
        data: the training data.
        cfg: the fit settings.

    Returns:
        the objective value.
    """
    value, _ = value_and_gradient(params, data, cfg)
    return value


@tracer.start_as_current_span("gradient")
def gradient(params: RegressionParams, data: "Dataset", cfg: FitConfig) -> RegressionParams:
    """Compute the analytic gradient of the objective.

    Args:
        params: the regression parameters.
        data: the training data.
        cfg: the fit settings.

    Returns:
        the gradient, shaped like the parameters.
    """
    _, grad = value_and_gradient(params, data, cfg)
    return grad


def loglik_terms(
    params: RegressionParams, features: NDArray[np.float64], outcomes: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Compute the per-sample log-likelihoods.

    Args:
        params: the regression parameters.
        features: features, N×p.
        outcomes: outcomes, N×n.

    Returns:
        the N log-likelihood values.
    """
    diag = features @ params.A.T + params.b
    if not np.all(diag > 0):
        raise NonPositiveDiagonal("Diagonal of L(x) is not positive on the data")
    offdiag = features @ params.C.T + params.d
    residual = _residuals(params, features, outcomes, diag, offdiag)
    return (
        np.sum(np.log(diag), axis=1)
        - 0.5 * np.sum(residual**2, axis=1)
        - params.n / 2 * LOG_2PI
    )
