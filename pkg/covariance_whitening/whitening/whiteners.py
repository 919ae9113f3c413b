# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Whitener stages, pipelines of stages and the closed-form fitters.

A stage maps the outcome it receives to z = L(x)ᵀ·z_prev − ν(x). A pipeline applies its
stages in order, so the composed whitener of stages L₁, ..., L_K is L₁···L_K.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar, NamedTuple, Sequence

import numpy as np
import scipy.signal
from numpy.typing import ArrayLike, NDArray
from opentelemetry import trace

from .exceptions import (
    DimensionMismatch,
    FeatureDomainError,
    InsufficientHistory,
    InvalidHalfLife,
    InvalidHorizon,
    InvalidMemory,
    InvalidPermutation,
    MissingTimestamps,
    NonPositiveDiagonal,
    NotPositiveDefinite,
    ParseError,
    SingularCovariance,
)
from .linalg import (
    LowerTriangular,
    SymmetricPD,
    batch_cholesky,
    batch_covariance,
    batch_precision_factor,
    covariance_from_whitener,
    packed_size,
    precision_factor,
    stack_dense,
)
from .objective import LOG_2PI, RegressionParams

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

STAGE_KINDS = ("constant", "diagonal", "sma", "ewma", "permutation", "regression")
# Single-point ewma evaluation skips outcomes weighing less than this share of the newest.
WEIGHT_CUTOFF = 1e-12


def _readonly(array: NDArray) -> NDArray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """Training or test samples.

    Attributes:
        features: feature matrix, N×p, entries in [−1, 1].
        outcomes: outcome matrix, N×n.
        timestamps: strictly increasing sample index, or None.
    """

    features: NDArray[np.float64]
    outcomes: NDArray[np.float64]
    timestamps: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        """Validate and freeze the arrays.

        Raises:
            DimensionMismatch: if the row counts disagree or there are no rows.
            FeatureDomainError: if a feature lies outside [−1, 1].
            ParseError: if an outcome is not finite.
        """
        features = np.array(self.features, dtype=np.float64)
        outcomes = np.array(self.outcomes, dtype=np.float64)
        if outcomes.ndim == 1:
            outcomes = outcomes[:, None]
        if features.ndim == 1 and features.size == 0:
            features = features.reshape(outcomes.shape[0], 0)
        if features.ndim != 2 or outcomes.ndim != 2:
            raise DimensionMismatch("features and outcomes must be matrices")
        if features.shape[0] != outcomes.shape[0] or outcomes.shape[0] < 1:
            raise DimensionMismatch(
                f"features have {features.shape[0]} rows but outcomes have "
                f"{outcomes.shape[0]}; at least one row is needed"
            )
        if outcomes.shape[1] < 1:
            raise DimensionMismatch("outcomes need at least one column")
        if not np.all(np.abs(features) <= 1):
            row, column = np.argwhere(~(np.abs(features) <= 1))[0]
            raise FeatureDomainError(
                f"Feature {column} of row {row} is {features[row, column]}, outside [-1, 1]"
            )
        if not np.all(np.isfinite(outcomes)):
            row = int(np.argwhere(~np.isfinite(outcomes))[0][0])
            raise ParseError("Outcome is not finite", row=row)
        object.__setattr__(self, "features", _readonly(features))
        object.__setattr__(self, "outcomes", _readonly(outcomes))
        if self.timestamps is not None:
            timestamps = np.array(self.timestamps, dtype=np.float64).reshape(-1)
            if timestamps.size != outcomes.shape[0]:
                raise DimensionMismatch("timestamps must have one entry per row")
            if np.any(np.diff(timestamps) <= 0):
                raise MissingTimestamps("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", _readonly(timestamps))

    @property
    def size(self) -> int:
        """Number of samples N."""
        return int(self.outcomes.shape[0])

    @property
    def n(self) -> int:
        """Outcome dimension."""
        return int(self.outcomes.shape[1])

    @property
    def p(self) -> int:
        """Feature dimension."""
        return int(self.features.shape[1])

    def take(self, rows: ArrayLike) -> "Dataset":
        """Select rows, keeping their order.

        Args:
            rows: row indices or a boolean mask.

        Returns:
            the selected samples.
        """
        index = np.asarray(rows)
        timestamps = None if self.timestamps is None else self.timestamps[index]
        return Dataset(self.features[index], self.outcomes[index], timestamps)

    def with_outcomes(self, outcomes: NDArray[np.float64]) -> "Dataset":
        """Replace the outcomes, keeping features and timestamps."""
        return Dataset(self.features, outcomes, self.timestamps)


class StageMap(NamedTuple):
    """Stacked affine maps of one stage over a run of samples.

    Row r of the maps belongs to sample start + r; earlier samples lack history.

    Attributes:
        start: number of leading samples without a map.
        linear: the matrices T applied as z ↦ T·z, shape (m, n, n).
        offset: the offsets ν subtracted after the product, shape (m, n), or None.
        logdet: the log-determinant contributions Σⱼ log Lⱼⱼ, shape (m,).
        triangular: whether T is the transpose of a lower-triangular factor.
    """

    start: int
    linear: NDArray[np.float64]
    offset: NDArray[np.float64] | None
    logdet: NDArray[np.float64]
    triangular: bool = True


def _transpose_map(start: int, factors: NDArray[np.float64], offset=None) -> StageMap:
    """Build the stage map of stacked dense whitener values."""
    logdet = np.sum(np.log(np.diagonal(factors, axis1=1, axis2=2)), axis=1)
    return StageMap(start, np.swapaxes(factors, 1, 2), offset, logdet)


class WhitenerStage(ABC):
    """A single whitener in a pipeline.

    Attributes:
        kind: the stage kind, one of STAGE_KINDS.
    """

    kind: ClassVar[str]

    @property
    @abstractmethod
    def n(self) -> int:
        """Outcome dimension."""

    @property
    def p(self) -> int | None:
        """Feature dimension, or None for stages that ignore features."""
        return None

    @property
    def warmup(self) -> int:
        """Number of prior outcomes needed before the stage is defined."""
        return 0

    @property
    def rolling(self) -> bool:
        """Whether the stage depends on the outcome history."""
        return self.warmup > 0

    @property
    def reorders(self) -> bool:
        """Whether the stage reorders outcomes instead of applying a triangular factor."""
        return False

    @abstractmethod
    def evaluate(self, x: ArrayLike, history: ArrayLike | None = None) -> LowerTriangular:
        """Evaluate the whitener at one sample.

        Args:
            x: the feature vector.
            history: the prior outcomes, oldest first, for rolling stages.

        Returns:
            the whitener value L(x).
        """

    @abstractmethod
    def map(self, features: NDArray[np.float64], outcomes: NDArray[np.float64]) -> StageMap:
        """Compute the stage maps over a run of consecutive samples.

        Args:
            features: features of the run, m×p.
            outcomes: the outcomes the stage receives, m×n.

        Returns:
            the stacked maps.
        """

    def _check_features(self, x: ArrayLike) -> NDArray[np.float64]:
        """Convert a feature vector and check its length."""
        point = np.asarray(x, dtype=np.float64).reshape(-1)
        if self.p is not None and point.size != self.p:
            raise DimensionMismatch(f"Expected {self.p} features, got {point.size}")
        return point


@dataclass(frozen=True, eq=False)
class ConstantStage(WhitenerStage):
    """Whitener that does not depend on the features.

    Attributes:
        factor: the constant whitener value.
    """

    kind: ClassVar[str] = "constant"
    factor: LowerTriangular

    @property
    def n(self) -> int:
        """Outcome dimension."""
        return self.factor.n

    def evaluate(self, x: ArrayLike, history: ArrayLike | None = None) -> LowerTriangular:
        """Return the stored factor."""
        return self.factor

    def map(self, features: NDArray[np.float64], outcomes: NDArray[np.float64]) -> StageMap:
        """Repeat the stored factor for every sample."""
        dense = np.broadcast_to(self.factor.dense(), (outcomes.shape[0], self.n, self.n))
        return _transpose_map(0, np.array(dense))


@dataclass(frozen=True, eq=False)
class DiagonalStage(WhitenerStage):
    """Diagonal whitener with log-variances Ax + b.

    Attributes:
        A: log-variance coefficients, n×p.
        b: log-variance offsets, n.
    """

    kind: ClassVar[str] = "diagonal"
    A: NDArray[np.float64]  # noqa: N815
    b: NDArray[np.float64]

    def __post_init__(self) -> None:
        """Validate the shapes."""
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        a_matrix = np.array(self.A, dtype=np.float64)
        if a_matrix.size == 0:
            a_matrix = a_matrix.reshape(b.size, 0)
        if a_matrix.ndim != 2 or a_matrix.shape[0] != b.size:
            raise DimensionMismatch(f"A has shape {a_matrix.shape} but b has length {b.size}")
        object.__setattr__(self, "A", _readonly(a_matrix))
        object.__setattr__(self, "b", _readonly(b))

    @property
    def n(self) -> int:
        """Outcome dimension."""
        return int(self.b.size)

    @property
    def p(self) -> int:
        """Feature dimension."""
        return int(self.A.shape[1])

    def evaluate(self, x: ArrayLike, history: ArrayLike | None = None) -> LowerTriangular:
        """Compute diag(exp(−(Ax + b)/2))."""
        point = self._check_features(x)
        diag = np.exp(-(self.A @ point + self.b) / 2)
        return LowerTriangular(diag, np.zeros(packed_size(self.n)))

    def map(self, features: NDArray[np.float64], outcomes: NDArray[np.float64]) -> StageMap:
        """Compute the diagonal scalings of every sample."""
        log_variance = features @ self.A.T + self.b
        linear = np.zeros((features.shape[0], self.n, self.n))
        index = np.arange(self.n)
        linear[:, index, index] = np.exp(-log_variance / 2)
        return StageMap(0, linear, None, -np.sum(log_variance, axis=1) / 2)


class _RollingStage(WhitenerStage):
    """Whitener built from a weighted average of prior outer products."""

    loading: float

    @abstractmethod
    def rolling_second_moments(self, outcomes: NDArray[np.float64]) -> NDArray[np.float64]:
        """Compute the second moment estimate before every sample by recursion.

        Args:
            outcomes: the outcome sequence, m×n.

        Returns:
            the estimates for samples warmup..m−1, shape (m − warmup, n, n).
        """

    @abstractmethod
    def second_moment(self, history: NDArray[np.float64]) -> NDArray[np.float64]:
        """Compute the second moment estimate by direct summation.

        Args:
            history: the prior outcomes, oldest first.

        Returns:
            the n×n estimate.
        """

    def _history(self, history: ArrayLike | None) -> NDArray[np.float64]:
        """Convert and check an outcome history."""
        values = np.asarray([] if history is None else history, dtype=np.float64)
        values = values.reshape(-1, self.n)
        if values.shape[0] < self.warmup:
            raise InsufficientHistory(
                f"{self.kind} stage needs {self.warmup} prior outcomes, got {values.shape[0]}"
            )
        return values

    def _factors(self, moments: NDArray[np.float64]) -> NDArray[np.float64]:
        """Compute chol(Σ̂⁻¹) for stacked second moments."""
        loaded = moments + self.loading * np.eye(self.n)
        try:
            return batch_precision_factor(loaded)
        except NotPositiveDefinite as exc:
            raise SingularCovariance(
                f"{self.kind} second moment is singular; increase the window or the loading"
            ) from exc

    def evaluate(self, x: ArrayLike, history: ArrayLike | None = None) -> LowerTriangular:
        """Compute chol(Σ̂⁻¹) from the prior outcomes."""
        moment = self.second_moment(self._history(history))
        return LowerTriangular.from_dense(self._factors(moment[None])[0])

    def map(self, features: NDArray[np.float64], outcomes: NDArray[np.float64]) -> StageMap:
        """Compute the rolling whiteners; the first warmup samples have none."""
        start = min(self.warmup, outcomes.shape[0])
        if start == outcomes.shape[0]:
            return _transpose_map(start, np.zeros((0, self.n, self.n)))
        return _transpose_map(start, self._factors(self.rolling_second_moments(outcomes)))


def _outer_products(outcomes: NDArray[np.float64]) -> NDArray[np.float64]:
    return outcomes[:, :, None] * outcomes[:, None, :]


@dataclass(frozen=True, eq=False)
class MovingAverageStage(_RollingStage):
    """Simple moving average of the last M outer products.

    Attributes:
        dimension: outcome dimension.
        memory: the window length M.
        loading: diagonal loading added to the average.
    """

    kind: ClassVar[str] = "sma"
    dimension: int
    memory: int
    loading: float = 0.0

    def __post_init__(self) -> None:
        """Validate the window.

        Raises:
            InvalidMemory: if the window is shorter than the outcome dimension.
        """
        if self.memory < self.dimension:
            raise InvalidMemory(
                f"memory {self.memory} is smaller than the outcome dimension {self.dimension}"
            )

    @property
    def n(self) -> int:
        """Outcome dimension."""
        return self.dimension

    @property
    def warmup(self) -> int:
        """The window length."""
        return self.memory

    def rolling_second_moments(self, outcomes: NDArray[np.float64]) -> NDArray[np.float64]:
        """Filter the outer products with a box kernel of length M."""
        kernel = np.full(self.memory, 1.0 / self.memory)
        averages = scipy.signal.lfilter(kernel, [1.0], _outer_products(outcomes), axis=0)
        return averages[self.memory - 1 : -1]

    def second_moment(self, history: NDArray[np.float64]) -> NDArray[np.float64]:
        """Average the last M outer products."""
        recent = history[-self.memory :]
        return recent.T @ recent / self.memory


@dataclass(frozen=True, eq=False)
class ExponentialStage(_RollingStage):
    """Exponentially weighted average of prior outer products.

    Attributes:
        dimension: outcome dimension.
        half_life: the half-life in samples; infinite for equal weights.
        loading: diagonal loading added to the average.
    """

    kind: ClassVar[str] = "ewma"
    dimension: int
    half_life: float
    loading: float = 0.0

    def __post_init__(self) -> None:
        """Validate the half-life.

        Raises:
            InvalidHalfLife: if the half-life is not positive.
        """
        if not self.half_life > 0:
            raise InvalidHalfLife(f"half_life must be positive, got {self.half_life}")

    @property
    def n(self) -> int:
        """Outcome dimension."""
        return self.dimension

    @property
    def warmup(self) -> int:
        """The outcome dimension."""
        return self.dimension

    @property
    def forgetting_factor(self) -> float:
        """The factor γ = 2^(−1/half_life)."""
        return 2.0 ** (-1.0 / self.half_life)

    def rolling_second_moments(self, outcomes: NDArray[np.float64]) -> NDArray[np.float64]:
        """Run S ← γ(S + yyᵀ) and w ← γ(w + 1) and return S/w."""
        gamma = self.forgetting_factor
        outer = _outer_products(outcomes)
        sums = scipy.signal.lfilter([0.0, gamma], [1.0, -gamma], outer, axis=0)
        weights = scipy.signal.lfilter([0.0, gamma], [1.0, -gamma], np.ones(outcomes.shape[0]))
        return sums[self.warmup :] / weights[self.warmup :, None, None]

    def second_moment(self, history: NDArray[np.float64]) -> NDArray[np.float64]:
        """Sum γʲ·y₋ⱼy₋ⱼᵀ over the history, newest first, and normalize."""
        gamma = self.forgetting_factor
        weights = gamma ** np.arange(history.shape[0], 0, -1, dtype=np.float64)
        return (history.T * weights) @ history / weights.sum()

    @property
    def span(self) -> int | None:
        """Number of prior outcomes weighing at least WEIGHT_CUTOFF of the newest, or None."""
        if math.isinf(self.half_life):
            return None
        reach = math.floor(math.log(WEIGHT_CUTOFF) / math.log(self.forgetting_factor))
        return max(self.warmup, reach + 1)

    def _history(self, history: ArrayLike | None) -> NDArray[np.float64]:
        """Convert and check an outcome history, keeping the outcomes within the span."""
        values = super()._history(history)
        return values if self.span is None else values[-self.span :]


@dataclass(frozen=True, eq=False)
class PermutationStage(WhitenerStage):
    """Reordering of the outcome entries.

    Attributes:
        order: 0-based source index of every output entry.
    """

    kind: ClassVar[str] = "permutation"
    order: tuple[int, ...]

    def __post_init__(self) -> None:
        """Validate the permutation.

        Raises:
            InvalidPermutation: if order is not a bijection on 0..n−1.
        """
        order = tuple(int(i) for i in self.order)
        if not order or sorted(order) != list(range(len(order))):
            raise InvalidPermutation(f"{list(self.order)} is not a permutation of 0..n-1")
        object.__setattr__(self, "order", order)

    @property
    def n(self) -> int:
        """Outcome dimension."""
        return len(self.order)

    @property
    def reorders(self) -> bool:
        """Always true."""
        return True

    def matrix(self) -> NDArray[np.float64]:
        """Get the permutation matrix Q with Q·y = y[order]."""
        return np.eye(self.n)[list(self.order)]

    def evaluate(self, x: ArrayLike, history: ArrayLike | None = None) -> LowerTriangular:
        """Return the identity; the stage acts by reordering."""
        return LowerTriangular.identity(self.n)

    def map(self, features: NDArray[np.float64], outcomes: NDArray[np.float64]) -> StageMap:
        """Repeat the permutation matrix for every sample."""
        rows = outcomes.shape[0]
        linear = np.array(np.broadcast_to(self.matrix(), (rows, self.n, self.n)))
        return StageMap(0, linear, None, np.zeros(rows), triangular=False)


@dataclass(frozen=True, eq=False)
class RegressionStage(WhitenerStage):
    """Whitener whose entries are affine in the features.

    Attributes:
        params: the regression coefficients.
        epsilon: the diagonal floor the stage was fitted with.
    """

    kind: ClassVar[str] = "regression"
    params: RegressionParams
    epsilon: float = 1e-6

    @property
    def n(self) -> int:
        """Outcome dimension."""
        return self.params.n

    @property
    def p(self) -> int:
        """Feature dimension."""
        return self.params.p

    def evaluate(self, x: ArrayLike, history: ArrayLike | None = None) -> LowerTriangular:
        """Compute diag(L) = Ax + b and offdiag(L) = Cx + d."""
        return self.params.whitener(self._check_features(x))

    def map(self, features: NDArray[np.float64], outcomes: NDArray[np.float64]) -> StageMap:
        """Compute the whitener and mean offset of every sample."""
        params = self.params
        diag = features @ params.A.T + params.b
        if not np.all(diag > 0):
            row = int(np.argwhere(~np.all(diag > 0, axis=1))[0][0])
            raise NonPositiveDiagonal(f"Diagonal of L(x) is not positive at sample {row}")
        factors = stack_dense(diag, features @ params.C.T + params.d)
        offset = None if params.E is None else features @ params.E.T + params.f
        return _transpose_map(0, factors, offset)


def evaluate(
    stage: WhitenerStage, x: ArrayLike, history: ArrayLike | None = None
) -> LowerTriangular:
    """Evaluate a stage at one sample.

    Args:
        stage: the stage.
        x: the feature vector.
        history: prior outcomes, oldest first, for rolling stages.

    Returns:
        the whitener value.
    """
    return stage.evaluate(x, history)


@dataclass(frozen=True, eq=False)
class Pipeline:
    """Ordered composition of whitener stages.

    Attributes:
        stages: the stages, applied first to last.
        n: outcome dimension.
        p: feature dimension.
    """

    stages: tuple[WhitenerStage, ...]
    n: int
    p: int

    def __post_init__(self) -> None:
        """Check that the stages agree on the dimensions.

        Raises:
            DimensionMismatch: if a stage disagrees.
        """
        object.__setattr__(self, "stages", tuple(self.stages))
        for position, stage in enumerate(self.stages):
            if stage.n != self.n:
                raise DimensionMismatch(
                    f"Stage {position} ({stage.kind}) has n={stage.n}, pipeline has n={self.n}"
                )
            if stage.p is not None and stage.p != self.p:
                raise DimensionMismatch(
                    f"Stage {position} ({stage.kind}) has p={stage.p}, pipeline has p={self.p}"
                )

    @property
    def rolling(self) -> bool:
        """Whether any stage depends on the outcome history."""
        return any(stage.rolling for stage in self.stages)

    @property
    def has_mean(self) -> bool:
        """Whether any stage carries a mean offset."""
        return any(
            isinstance(stage, RegressionStage) and stage.params.has_mean for stage in self.stages
        )

    def append(self, stage: WhitenerStage) -> "Pipeline":
        """Get a pipeline with one more stage at the end."""
        return Pipeline((*self.stages, stage), self.n, self.p)

    def evaluate(self, x: ArrayLike) -> LowerTriangular:
        """Evaluate the composed whitener at one sample.

        Args:
            x: the feature vector.

        Returns:
            the composed whitener value.

        Raises:
            InsufficientHistory: if a stage depends on the outcome history.
        """
        if self.rolling:
            raise InsufficientHistory("Pipelines with rolling stages need the outcome history")
        point = np.asarray(x, dtype=np.float64).reshape(1, -1)
        if point.shape[1] != self.p:
            raise DimensionMismatch(f"Expected {self.p} features, got {point.shape[1]}")
        composed = compose(self, point, np.zeros((1, self.n)))
        return LowerTriangular.from_dense(composed.factors()[0])


class Composition(NamedTuple):
    """The composed affine map z = W·y + c of a pipeline over a dataset.

    Attributes:
        rows: the samples that have a map.
        linear: the composed matrices W, shape (m, n, n).
        offset: the composed offsets c, shape (m, n), or None.
        logdet: the summed log-determinants, shape (m,).
        whitened: the whitened outcomes, shape (m, n).
        triangular: whether W is the transpose of a lower-triangular matrix.
    """

    rows: NDArray[np.intp]
    linear: NDArray[np.float64]
    offset: NDArray[np.float64] | None
    logdet: NDArray[np.float64]
    whitened: NDArray[np.float64]
    triangular: bool

    def factors(self) -> NDArray[np.float64]:
        """Compute the composed lower-triangular whiteners."""
        if self.triangular:
            return np.ascontiguousarray(np.swapaxes(self.linear, 1, 2))
        return batch_cholesky(np.swapaxes(self.linear, 1, 2) @ self.linear)

    def means(self) -> NDArray[np.float64] | None:
        """Compute the predicted means −W⁻¹c, or None without offsets."""
        if self.offset is None:
            return None
        return -np.linalg.solve(self.linear, self.offset[..., None])[..., 0]

    def loglik(self) -> NDArray[np.float64]:
        """Compute the per-sample log-likelihoods."""
        n = self.whitened.shape[1]
        return -n / 2 * LOG_2PI + self.logdet - 0.5 * np.sum(self.whitened**2, axis=1)


def compose(
    pipeline: Pipeline, features: NDArray[np.float64], outcomes: NDArray[np.float64]
) -> Composition:
    """Compose the stage maps over consecutive samples.

    Each stage sees the outcomes whitened by the stages before it; samples a rolling
    stage cannot map yet are dropped from then on.

    Args:
        pipeline: the pipeline.
        features: the features, N×p.
        outcomes: the outcomes, N×n.

    Returns:
        the composition.
    """
    size, n = outcomes.shape
    rows = np.arange(size)
    linear = np.broadcast_to(np.eye(n), (size, n, n)).copy()
    offset = None
    whitened = np.array(outcomes, dtype=np.float64)
    logdet = np.zeros(size)
    triangular = True
    for stage in pipeline.stages:
        stage_map = stage.map(features[rows], whitened)
        keep = slice(stage_map.start, None)
        rows, linear, whitened, logdet = rows[keep], linear[keep], whitened[keep], logdet[keep]
        linear = stage_map.linear @ linear
        whitened = np.einsum("mij,mj->mi", stage_map.linear, whitened)
        logdet = logdet + stage_map.logdet
        if offset is not None:
            offset = np.einsum("mij,mj->mi", stage_map.linear, offset[keep])
        if stage_map.offset is not None:
            offset = -stage_map.offset if offset is None else offset - stage_map.offset
            whitened = whitened - stage_map.offset
        triangular = triangular and stage_map.triangular
    return Composition(rows, linear, offset, logdet, whitened, triangular)


@dataclass(frozen=True, eq=False)
class WhitenResult:
    """Whitened samples with their whiteners and predictions.

    Attributes:
        whitened: the whitened dataset, rows without warm-up dropped.
        rows: the source row of every whitened sample.
        factors: the composed whiteners, shape (m, n, n).
        covariances: the predicted covariances, shape (m, n, n).
        means: the predicted means, shape (m, n), or None.
        loglik: the per-sample log-likelihoods, shape (m,).
        dropped: the number of samples dropped for warm-up.
    """

    whitened: Dataset
    rows: NDArray[np.intp]
    factors: NDArray[np.float64]
    covariances: NDArray[np.float64]
    means: NDArray[np.float64] | None
    loglik: NDArray[np.float64]
    dropped: int

    def factor(self, i: int) -> LowerTriangular:
        """Get the whitener of sample i of the result."""
        return LowerTriangular.from_dense(self.factors[i])

    def covariance(self, i: int) -> SymmetricPD:
        """Get the predicted covariance of sample i of the result."""
        return SymmetricPD.from_factorization(self.covariances[i])


def _check_dimensions(pipeline: Pipeline, data: Dataset) -> None:
    """Check that a pipeline and a dataset agree on the dimensions.

    Raises:
        DimensionMismatch: if they disagree.
        MissingTimestamps: if the pipeline is rolling and the data has no timestamps.
    """
    if (pipeline.n, pipeline.p) != (data.n, data.p):
        raise DimensionMismatch(
            f"Pipeline has n={pipeline.n}, p={pipeline.p} but the data has "
            f"n={data.n}, p={data.p}"
        )
    if pipeline.rolling and data.timestamps is None:
        raise MissingTimestamps("Rolling stages need timestamped data")


@tracer.start_as_current_span("whiten")
def whiten_dataset(pipeline: Pipeline, data: Dataset) -> WhitenResult:
    """Whiten a dataset and predict the covariance of every sample.

    Args:
        pipeline: the pipeline.
        data: the samples.

    Returns:
        the whitened samples and predictions.

    Raises:
        InsufficientHistory: if no sample survives the warm-up.
    """
    _check_dimensions(pipeline, data)
    composed = compose(pipeline, data.features, data.outcomes)
    dropped = data.size - composed.rows.size
    if dropped:
        logger.info("Dropped %d rows lacking warm-up history", dropped)
    if composed.rows.size == 0:
        raise InsufficientHistory(f"All {data.size} rows lack warm-up history")
    factors = composed.factors()
    whitened = data.take(composed.rows).with_outcomes(composed.whitened)
    return WhitenResult(
        whitened=whitened,
        rows=composed.rows,
        factors=factors,
        covariances=batch_covariance(factors),
        means=composed.means(),
        loglik=composed.loglik(),
        dropped=dropped,
    )


@tracer.start_as_current_span("score")
def score(pipeline: Pipeline, data: Dataset) -> float:
    """Compute the average log-likelihood in nats per sample.

    Args:
        pipeline: the pipeline.
        data: the samples.

    Returns:
        the average log-likelihood over the samples past warm-up.

    Raises:
        InsufficientHistory: if no sample survives the warm-up.
    """
    _check_dimensions(pipeline, data)
    composed = compose(pipeline, data.features, data.outcomes)
    if composed.rows.size == 0:
        raise InsufficientHistory(f"All {data.size} rows lack warm-up history")
    return float(np.mean(composed.loglik()))


def _second_moment(data: Dataset, loading: float) -> NDArray[np.float64]:
    return data.outcomes.T @ data.outcomes / data.size + loading * np.eye(data.n)


@tracer.start_as_current_span("fit_constant")
def fit_constant(data: Dataset, loading: float = 0.0) -> ConstantStage:
    """Fit the constant whitener chol(Σ̂⁻¹) of the empirical second moment.

    Args:
        data: the training samples.
        loading: diagonal loading added to the second moment.

    Returns:
        the fitted stage.

    Raises:
        SingularCovariance: if the second moment is singular.
    """
    if data.size < data.n and loading <= 0:
        raise SingularCovariance(f"{data.size} samples cannot estimate a {data.n}-dim covariance")
    try:
        factor = precision_factor(_second_moment(data, loading))
    except NotPositiveDefinite as exc:
        raise SingularCovariance("Empirical second moment is singular") from exc
    logger.info("Fitted constant stage, n=%d, N=%d", data.n, data.size)
    return ConstantStage(factor)


def _require_timestamps(data: Dataset, kind: str) -> None:
    if data.timestamps is None:
        raise MissingTimestamps(f"{kind} stages need timestamped data")


def fit_sma(data: Dataset, memory: int, loading: float = 0.0) -> MovingAverageStage:
    """Build a simple moving average stage.

    Args:
        data: the training samples.
        memory: the window length M.
        loading: diagonal loading.

    Returns:
        the stage.

    Raises:
        MissingTimestamps: if the data has no timestamps.
    """
    _require_timestamps(data, "sma")
    stage = MovingAverageStage(data.n, int(memory), float(loading))
    logger.info("Built sma stage, n=%d, memory=%d", data.n, memory)
    return stage


def fit_ewma(data: Dataset, half_life: float, loading: float = 0.0) -> ExponentialStage:
    """Build an exponentially weighted moving average stage.

    Args:
        data: the training samples.
        half_life: the half-life in samples.
        loading: diagonal loading.

    Returns:
        the stage.

    Raises:
        MissingTimestamps: if the data has no timestamps.
    """
    _require_timestamps(data, "ewma")
    stage = ExponentialStage(data.n, float(half_life), float(loading))
    logger.info("Built ewma stage, n=%d, half_life=%s", data.n, half_life)
    return stage


def fit_permutation(order: Sequence[int]) -> PermutationStage:
    """Build a permutation stage.

    Args:
        order: 0-based source index of every output entry.

    Returns:
        the stage.
    """
    return PermutationStage(tuple(order))


@tracer.start_as_current_span("fuse")
def fuse(pipelines: Sequence[Pipeline], x: ArrayLike) -> SymmetricPD:
    """Fuse pipelines by averaging their precision matrices at x.

    Args:
        pipelines: the pipelines.
        x: the feature vector.

    Returns:
        the inverse of the average precision.

    Raises:
        DimensionMismatch: if the pipelines disagree on the dimensions.
    """
    if not pipelines:
        raise DimensionMismatch("Nothing to fuse")
    first = pipelines[0]
    if any((other.n, other.p) != (first.n, first.p) for other in pipelines):
        raise DimensionMismatch("Fused pipelines must share n and p")
    # The average precision is G·Gᵀ for the stacked factors G = [L₁ … L_K]/√K, so the
    # R factor of Gᵀ gives its Cholesky factor without forming the precision.
    stacked = np.hstack([pipeline.evaluate(x).dense() for pipeline in pipelines])
    upper = np.linalg.qr(stacked.T / math.sqrt(len(pipelines)), mode="r")
    factor = upper.T * np.sign(np.diag(upper))
    return covariance_from_whitener(LowerTriangular.from_dense(factor))


def replicate_horizon(data: Dataset, horizon: int) -> Dataset:
    """Pair every feature row with each of the next H outcomes.

    Args:
        data: the samples.
        horizon: the number of outcomes H per feature row.

    Returns:
        (N − H + 1)·H samples, grouped by feature row; timestamps are dropped when H > 1.

    Raises:
        InvalidHorizon: if H < 1.
        InsufficientHistory: if fewer than H samples are given.
    """
    if horizon < 1:
        raise InvalidHorizon(f"horizon must be at least 1, got {horizon}")
    if horizon == 1:
        return data
    if data.size < horizon:
        raise InsufficientHistory(f"{data.size} samples cannot cover a horizon of {horizon}")
    origins = np.repeat(np.arange(data.size - horizon + 1), horizon)
    targets = origins + np.tile(np.arange(horizon), data.size - horizon + 1)
    return Dataset(data.features[origins], data.outcomes[targets])


def lift(score_a: float, score_b: float) -> float:
    """Get the likelihood ratio exp(score_a − score_b) of two average log-likelihoods."""
    return math.exp(score_a - score_b)
