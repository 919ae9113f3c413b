# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Feature transforms onto the box [-1, 1]."""

import enum
from dataclasses import dataclass

import numpy as np
import scipy.stats
from numpy.typing import ArrayLike, NDArray
from opentelemetry import trace

from .exceptions import DegenerateColumn, DimensionMismatch

tracer = trace.get_tracer(__name__)


class TransformKind(str, enum.Enum):
    """Supported transforms.

    Attrs:
        CLIP: clip to [-1, 1].
        QUANTILE: map to 2·quantile − 1 of the training column.
        MINMAX: scale the training range onto [-1, 1], then clip.
    """

    CLIP = "clip"
    QUANTILE = "quantile"
    MINMAX = "minmax"


@dataclass(frozen=True, eq=False)
class Transform:
    """A fitted transform of one column.

    Attributes:
        kind: the transform kind.
        knots: distinct sorted training values, for quantile transforms.
        levels: the transformed value at each knot, for quantile transforms.
        low: the training minimum, for minmax transforms.
        high: the training maximum, for minmax transforms.
    """

    kind: TransformKind
    knots: tuple[float, ...] = ()
    levels: tuple[float, ...] = ()
    low: float | None = None
    high: float | None = None

    def __post_init__(self) -> None:
        """Check the fitted state matches the kind."""
        object.__setattr__(self, "kind", TransformKind(self.kind))
        if len(self.knots) != len(self.levels):
            raise DimensionMismatch("knots and levels must have the same length")
        if self.kind is TransformKind.QUANTILE and not self.knots:
            raise DimensionMismatch("quantile transforms need at least one knot")
        if self.kind is TransformKind.MINMAX:
            if self.low is None or self.high is None or not self.high > self.low:
                raise DegenerateColumn(f"minmax range [{self.low}, {self.high}] is empty")


def _column(values: ArrayLike) -> NDArray[np.float64]:
    column = np.asarray(values, dtype=np.float64).reshape(-1)
    if column.size == 0:
        raise DimensionMismatch("Cannot fit a transform on an empty column")
    return column


@tracer.start_as_current_span("fit_transform")
def fit_transform(kind: TransformKind | str, train_column: ArrayLike) -> Transform:
    """Fit a transform on a training column.

    Quantile levels use mid-ranks (rank − 0.5)/N, with tied values sharing their average.

    Args:
        kind: the transform kind.
        train_column: the training values.

    Returns:
        the fitted transform.

    Raises:
        DegenerateColumn: if a minmax column is constant.
    """
    kind = TransformKind(kind)
    if kind is TransformKind.CLIP:
        return Transform(kind)
    column = _column(train_column)
    if kind is TransformKind.MINMAX:
        low, high = float(column.min()), float(column.max())
        if not high > low:
            raise DegenerateColumn(f"Column is constant ({low}); minmax scaling is undefined")
        return Transform(kind, low=low, high=high)
    ranks = scipy.stats.rankdata(column, method="average")
    knots, first = np.unique(column, return_index=True)
    levels = 2 * (ranks[first] - 0.5) / column.size - 1
    return Transform(kind, knots=tuple(knots.tolist()), levels=tuple(levels.tolist()))


def apply(transform: Transform, column: ArrayLike) -> NDArray[np.float64]:
    """Apply a fitted transform.

    Args:
        transform: the transform.
        column: the values.

    Returns:
        the transformed values, all in [-1, 1].
    """
    values = np.asarray(column, dtype=np.float64).reshape(-1)
    match transform.kind:
        case TransformKind.QUANTILE:
            return np.interp(values, transform.knots, transform.levels, left=-1.0, right=1.0)
        case TransformKind.MINMAX:
            low, high = transform.low, transform.high
            scaled = 2 * (values - low) / (high - low) - 1  # type: ignore[operator]
            return np.clip(scaled, -1.0, 1.0)
    return np.clip(values, -1.0, 1.0)
