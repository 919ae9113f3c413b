# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""CSV ingestion, recipes, model documents and per-row output files."""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from opentelemetry import trace

from .exceptions import (
    DimensionMismatch,
    InsufficientHistory,
    ParseError,
    RecipeError,
    SchemaError,
    UserError,
    VersionMismatch,
)
from .features import Transform, TransformKind, apply, fit_transform
from .linalg import LowerTriangular, offdiag_indices
from .objective import RegressionParams
from .serializers import (
    MODEL_VERSION,
    ModelDocumentSerializer,
    RecipeSerializer,
    flatten_errors,
)
from .solver import StageSpec
from .whiteners import (
    ConstantStage,
    Dataset,
    DiagonalStage,
    ExponentialStage,
    MovingAverageStage,
    PermutationStage,
    Pipeline,
    RegressionStage,
    WhitenerStage,
    WhitenResult,
    replicate_horizon,
)

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

# Lagged ‖y_{i−1}‖₁; as a trailing source it averages ‖y_j‖₁ over the window.
ABS_OUTCOME_SUM = "abs_outcome_sum"


@dataclass(frozen=True)
class TrailingSpec:
    """Trailing averages of one column over windows that end just before the row.

    Attributes:
        source: the averaged column.
        windows: the window lengths.
    """

    source: str
    windows: tuple[int, ...]


def trailing_name(source: str, window: int) -> str:
    """Get the name of the trailing average of a column.

    Args:
        source: the averaged column.
        window: the window length.

    Returns:
        the synthesized column name.
    """
    return f"{source}_trailing_{window}"


@dataclass(frozen=True)
class Recipe:  # pylint: disable=too-many-instance-attributes
    """How to build datasets from a CSV file and which stages to fit.

    Attributes:
        outcomes: the outcome columns.
        stages: the stages to fit.
        index: the index column, if any.
        features: the feature columns with their transform kinds.
        trailing: the trailing averages to synthesize.
        split_fraction: share of raw rows used for training.
        split_before: index value before which rows are used for training.
        horizon: the number of future outcomes paired with each feature row.
    """

    outcomes: tuple[str, ...]
    stages: tuple[StageSpec, ...]
    index: str | None = None
    features: tuple[tuple[str, TransformKind], ...] = ()
    trailing: tuple[TrailingSpec, ...] = ()
    split_fraction: float | None = None
    split_before: str | None = None
    horizon: int = 1


@dataclass(frozen=True)
class FeaturePlan:
    """How to build feature rows, with transforms fitted on training data.

    Attributes:
        outcomes: the outcome columns.
        columns: the feature columns.
        transforms: the fitted transform of every feature column.
        index: the index column, if any.
        trailing: the trailing averages to synthesize.
    """

    outcomes: tuple[str, ...]
    columns: tuple[str, ...] = ()
    transforms: tuple[Transform, ...] = ()
    index: str | None = None
    trailing: tuple[TrailingSpec, ...] = ()

    @property
    def p(self) -> int:
        """Feature dimension."""
        return len(self.columns)

    @property
    def needs_outcomes(self) -> bool:
        """Whether the features are built from past outcomes."""
        sources = set(self.columns) | {spec.source for spec in self.trailing}
        return ABS_OUTCOME_SUM in sources


@dataclass(frozen=True)
class LoadResult:
    """Datasets built from a CSV file by a recipe.

    Attributes:
        train: the training samples.
        test: the test samples, or None without a test split.
        plan: the feature plan with the fitted transforms.
        dropped: raw rows dropped for trailing warm-up.
    """

    train: Dataset
    test: Dataset | None
    plan: FeaturePlan
    dropped: int = 0


@dataclass(frozen=True)
class Prepared:
    """A dataset built from a CSV file by a fitted plan.

    Attributes:
        data: the samples.
        row_ids: the index value or row number of every sample.
        has_outcomes: whether the file carried the outcome columns.
        dropped: raw rows dropped for trailing warm-up.
    """

    data: Dataset
    row_ids: list[Any] = field(default_factory=list)
    has_outcomes: bool = True
    dropped: int = 0


def _raise_recipe_errors(errors: Any) -> None:
    """Raise the first serializer error as a RecipeError.

    Raises:
        RecipeError: always.
    """
    path, message = flatten_errors(errors)[0]
    raise RecipeError(message, field=path)


@tracer.start_as_current_span("read_recipe")
def read_recipe(path: Path | str) -> Recipe:
    """Read and validate a recipe document.

    Args:
        path: the JSON file.

    Returns:
        the recipe.

    Raises:
        RecipeError: if the document is invalid, naming the offending field.
    """
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise RecipeError(f"Cannot read recipe {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RecipeError(f"Recipe {path} is not valid JSON: {exc}") from exc
    serializer = RecipeSerializer(data=document)
    if not serializer.is_valid():
        _raise_recipe_errors(serializer.errors)
    recipe = serializer.validated_data
    split = recipe["split"] or {}
    return Recipe(
        outcomes=tuple(recipe["outcomes"]),
        stages=tuple(StageSpec(stage["kind"], stage["options"]) for stage in recipe["stages"]),
        index=recipe["index"],
        features=tuple(
            (feature["column"], TransformKind(feature["transform"]))
            for feature in recipe.get("features", [])
        ),
        trailing=tuple(
            TrailingSpec(spec["source"], tuple(spec["windows"]))
            for spec in recipe.get("trailing", [])
        ),
        split_fraction=split.get("fraction"),
        split_before=split.get("before"),
        horizon=recipe["horizon"],
    )


def _read_csv(path: Path | str) -> pd.DataFrame:
    """Read a CSV file as text cells, rejecting duplicate headers.

    Raises:
        ParseError: if the file cannot be parsed.
    """
    try:
        header = pd.read_csv(path, header=None, nrows=1, dtype=str, keep_default_na=False)
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"Cannot read {path}: {exc}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"Cannot parse {path}: {exc}") from exc
    names = header.iloc[0].tolist()
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise ParseError(f"Duplicate header names: {', '.join(duplicates)}")
    if frame.empty:
        raise ParseError(f"{path} has no data rows")
    return frame


def _numeric(frame: pd.DataFrame, column: str) -> pd.Series:
    """Parse a column as finite decimals.

    Raises:
        ParseError: naming the first bad cell; rows count from 1 after the header.
    """
    values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
    bad = values.isna() | ~np.isfinite(values)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError(
            f'Cell "{frame[column].iloc[row]}" is not a finite number',
            row=row + 1,
            column=column,
        )
    return values.astype(np.float64)


def _ordinal(values: pd.Series | str, column: str) -> pd.Series | float:
    """Parse index values as numbers, or as dates counted in days since the epoch.

    Raises:
        ParseError: if the values are neither.
    """
    series = pd.Series([values]) if isinstance(values, str) else values
    numbers = pd.to_numeric(series.str.strip(), errors="coerce")
    if not numbers.isna().any():
        ordinal = numbers.astype(np.float64)
    else:
        try:
            dates = pd.to_datetime(series.str.strip(), format="ISO8601")
        except (ValueError, TypeError) as exc:
            raise ParseError(
                f"Index values are neither numbers nor dates: {exc}", column=column
            ) from exc
        ordinal = (dates - pd.Timestamp("1970-01-01")) / pd.Timedelta(days=1)
    return float(ordinal.iloc[0]) if isinstance(values, str) else ordinal


def _require_columns(frame: pd.DataFrame, names: Sequence[str], path: str) -> None:
    """Check declared columns are in the file.

    Raises:
        RecipeError: naming the first missing column.
    """
    for position, name in enumerate(names):
        if name not in frame.columns:
            raise RecipeError(f'column "{name}" is not in the file', field=f"{path}[{position}]")


def _feature_frame(
    frame: pd.DataFrame,
    columns: Sequence[str],
    trailing: Sequence[TrailingSpec],
    outcomes: pd.DataFrame | None,
) -> pd.DataFrame:
    """Build the raw feature columns, synthesizing lagged and trailing ones.

    Every synthesized value at row i uses rows before i only; rows without enough history
    hold NaN.

    Raises:
        RecipeError: if a feature column is neither in the file nor synthesized.
    """
    synthesized = {
        trailing_name(spec.source, window): (spec.source, window)
        for spec in trailing
        for window in spec.windows
    }

    def source(name: str) -> pd.Series:
        if name == ABS_OUTCOME_SUM:
            if outcomes is None:
                raise RecipeError(f"{ABS_OUTCOME_SUM} needs the outcome columns")
            return outcomes.abs().sum(axis=1)
        return _numeric(frame, name)

    built = {}
    for position, name in enumerate(columns):
        if name == ABS_OUTCOME_SUM:
            built[name] = source(name).shift(1)
        elif name in synthesized:
            column, window = synthesized[name]
            built[name] = source(column).rolling(window).mean().shift(1)
        elif name in frame.columns:
            built[name] = _numeric(frame, name)
        else:
            raise RecipeError(
                f'column "{name}" is neither in the file nor synthesized',
                field=f"features[{position}].column",
            )
    return pd.DataFrame(built, index=frame.index, columns=list(columns))


def _outcome_frame(frame: pd.DataFrame, names: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame({name: _numeric(frame, name) for name in names}, index=frame.index)


def _dataset(
    features: pd.DataFrame,
    transforms: Sequence[Transform],
    outcomes: NDArray[np.float64],
    timestamps: NDArray[np.float64] | None,
) -> Dataset:
    """Apply the transforms and build a dataset."""
    columns = [apply(t, features.iloc[:, j].to_numpy()) for j, t in enumerate(transforms)]
    matrix = np.column_stack(columns) if columns else np.zeros((outcomes.shape[0], 0))
    return Dataset(matrix, outcomes, timestamps)


@tracer.start_as_current_span("load")
def load(path: Path | str, recipe: Recipe) -> LoadResult:
    """Build training and test datasets from a CSV file.

    Transforms are fitted on the training rows only and applied to both splits.

    Args:
        path: the CSV file.
        recipe: the recipe.

    Returns:
        the datasets and the fitted feature plan.

    Raises:
        RecipeError: if a declared column is missing or the split needs an index.
        InsufficientHistory: if no training row survives the warm-up.
    """
    frame = _read_csv(path)
    _require_columns(frame, recipe.outcomes, "outcomes")
    if recipe.index is not None:
        _require_columns(frame, [recipe.index], "index")
    columns = [column for column, _ in recipe.features]
    outcomes = _outcome_frame(frame, recipe.outcomes)
    raw = _feature_frame(frame, columns, recipe.trailing, outcomes)
    timestamps = (
        _ordinal(frame[recipe.index], recipe.index).to_numpy()
        if recipe.index is not None
        else np.arange(len(frame), dtype=np.float64)
    )
    if recipe.split_before is not None:
        if recipe.index is None:
            raise RecipeError("splitting by index value needs an index column", field="split")
        in_train = timestamps < _ordinal(recipe.split_before, recipe.index)
    else:
        fraction = 1.0 if recipe.split_fraction is None else recipe.split_fraction
        in_train = np.arange(len(frame)) < int(fraction * len(frame))
    complete = ~raw.isna().any(axis=1).to_numpy()
    dropped = int(np.sum(~complete))
    if dropped:
        logger.info("Dropped %d rows lacking trailing history", dropped)
    train_rows, test_rows = in_train & complete, ~in_train & complete
    if not train_rows.any():
        raise InsufficientHistory("No training rows remain after the trailing warm-up")
    transforms = tuple(
        fit_transform(kind, raw.loc[train_rows, column].to_numpy())
        for column, kind in recipe.features
    )
    values = outcomes.to_numpy()
    train = _dataset(raw[train_rows], transforms, values[train_rows], timestamps[train_rows])
    test = None
    if test_rows.any():
        test = _dataset(raw[test_rows], transforms, values[test_rows], timestamps[test_rows])
    if recipe.horizon > 1:
        train = replicate_horizon(train, recipe.horizon)
        test = replicate_horizon(test, recipe.horizon) if test is not None else None
    plan = FeaturePlan(
        outcomes=recipe.outcomes,
        columns=tuple(columns),
        transforms=transforms,
        index=recipe.index,
        trailing=recipe.trailing,
    )
    logger.info(
        "Loaded %s: %d training and %d test samples, n=%d p=%d",
        path,
        train.size,
        0 if test is None else test.size,
        train.n,
        train.p,
    )
    return LoadResult(train, test, plan, dropped)


@tracer.start_as_current_span("prepare")
def prepare(path: Path | str, plan: FeaturePlan, require_outcomes: bool = True) -> Prepared:
    """Build a dataset from a CSV file with an already fitted plan.

    Args:
        path: the CSV file.
        plan: the fitted feature plan.
        require_outcomes: whether the outcome columns must be present; when absent the
            outcomes are zero.

    Returns:
        the prepared samples.

    Raises:
        DimensionMismatch: if some outcome columns are missing.
        RecipeError: if a feature or index column is missing.
        InsufficientHistory: if no row survives the warm-up.
    """
    frame = _read_csv(path)
    present = [name for name in plan.outcomes if name in frame.columns]
    has_outcomes = len(present) == len(plan.outcomes)
    if require_outcomes or plan.needs_outcomes or present:
        if not has_outcomes:
            raise DimensionMismatch(
                f"Model has n={len(plan.outcomes)} outcomes ({', '.join(plan.outcomes)}) "
                f"but the data has n={len(present)} of them"
            )
        outcomes = _outcome_frame(frame, plan.outcomes)
    else:
        outcomes = None
    raw = _feature_frame(frame, plan.columns, plan.trailing, outcomes)
    complete = ~raw.isna().any(axis=1).to_numpy()
    if not complete.any():
        raise InsufficientHistory("No rows remain after the trailing warm-up")
    if plan.index is not None:
        _require_columns(frame, [plan.index], "index")
        timestamps = _ordinal(frame[plan.index], plan.index).to_numpy()
        ids = frame[plan.index].tolist()
    else:
        timestamps = np.arange(len(frame), dtype=np.float64)
        ids = list(range(len(frame)))
    values = (
        outcomes.to_numpy() if outcomes is not None else np.zeros((len(frame), len(plan.outcomes)))
    )
    data = _dataset(raw[complete], plan.transforms, values[complete], timestamps[complete])
    row_ids = [row_id for row_id, keep in zip(ids, complete) if keep]
    return Prepared(data, row_ids, outcomes is not None, int(np.sum(~complete)))


def _stage_document(stage: WhitenerStage) -> dict[str, Any]:
    """Describe a stage as a JSON-ready dict."""
    match stage:
        case ConstantStage():
            params = {"diag": stage.factor.diag.tolist(), "offdiag": stage.factor.offdiag.tolist()}
        case DiagonalStage():
            params = {"A": stage.A.tolist(), "b": stage.b.tolist()}
        case MovingAverageStage():
            params = {"memory": stage.memory, "loading": stage.loading}
        case ExponentialStage():
            half_life = None if math.isinf(stage.half_life) else stage.half_life
            params = {"half_life": half_life, "loading": stage.loading}
        case PermutationStage():
            params = {"order": list(stage.order)}
        case RegressionStage():
            blocks = stage.params
            params = {
                "A": blocks.A.tolist(),
                "b": blocks.b.tolist(),
                "C": blocks.C.tolist(),
                "d": blocks.d.tolist(),
                "E": None if blocks.E is None else blocks.E.tolist(),
                "f": None if blocks.f is None else blocks.f.tolist(),
                "epsilon": stage.epsilon,
            }
        case _:
            raise SchemaError(f"Cannot save stages of kind {stage.kind}")
    return {"kind": stage.kind, **params}


def _build_stage(kind: str, params: dict[str, Any], n: int, p: int) -> WhitenerStage:
    """Rebuild a stage from validated document fields."""
    match kind:
        case "constant":
            return ConstantStage(LowerTriangular(params["diag"], params["offdiag"]))
        case "diagonal":
            return DiagonalStage(np.reshape(params["A"], (len(params["b"]), p)), params["b"])
        case "sma":
            return MovingAverageStage(n, params["memory"], params["loading"])
        case "ewma":
            half_life = math.inf if params["half_life"] is None else params["half_life"]
            return ExponentialStage(n, half_life, params["loading"])
        case "permutation":
            return PermutationStage(tuple(params["order"]))
    k = n * (n - 1) // 2
    regression = RegressionParams(
        A=np.reshape(params["A"], (len(params["b"]), p)),
        b=params["b"],
        C=np.reshape(params["C"], (len(params["d"]), p)) if params["d"] else np.zeros((k, p)),
        d=params["d"],
        E=None if params["E"] is None else np.reshape(params["E"], (len(params["b"]), p)),
        f=params["f"],
    )
    return RegressionStage(regression, params["epsilon"])


def _plan_document(plan: FeaturePlan) -> dict[str, Any]:
    """Describe a feature plan as a JSON-ready dict."""
    return {
        "index": plan.index,
        "outcomes": list(plan.outcomes),
        "features": [
            {
                "column": column,
                "transform": {
                    "kind": transform.kind.value,
                    "knots": list(transform.knots),
                    "levels": list(transform.levels),
                    "low": transform.low,
                    "high": transform.high,
                },
            }
            for column, transform in zip(plan.columns, plan.transforms)
        ],
        "trailing": [
            {"source": spec.source, "windows": list(spec.windows)} for spec in plan.trailing
        ],
    }


def _build_plan(document: dict[str, Any]) -> FeaturePlan:
    """Rebuild a feature plan from validated document fields."""
    return FeaturePlan(
        outcomes=tuple(document["outcomes"]),
        columns=tuple(feature["column"] for feature in document["features"]),
        transforms=tuple(
            Transform(
                TransformKind(feature["transform"]["kind"]),
                knots=tuple(feature["transform"]["knots"]),
                levels=tuple(feature["transform"]["levels"]),
                low=feature["transform"]["low"],
                high=feature["transform"]["high"],
            )
            for feature in document["features"]
        ),
        index=document["index"],
        trailing=tuple(
            TrailingSpec(spec["source"], tuple(spec["windows"])) for spec in document["trailing"]
        ),
    )


@tracer.start_as_current_span("save_model")
def save_model(pipeline: Pipeline, plan: FeaturePlan | None, path: Path | str) -> None:
    """Write a pipeline and its feature plan as a JSON document.

    Floats are written in their shortest round-trip form, so loading is bit-exact.

    Args:
        pipeline: the pipeline.
        plan: the feature plan, if any.
        path: the output file.
    """
    document = {
        "version": MODEL_VERSION,
        "n": pipeline.n,
        "p": pipeline.p,
        "stages": [_stage_document(stage) for stage in pipeline.stages],
        "plan": None if plan is None else _plan_document(plan),
    }
    Path(path).write_text(json.dumps(document, indent=2, allow_nan=False), encoding="utf-8")
    logger.info("Wrote model with %d stages to %s", len(pipeline.stages), path)


@tracer.start_as_current_span("load_model")
def load_model(path: Path | str) -> tuple[Pipeline, FeaturePlan | None]:
    """Read a pipeline and its feature plan.

    Args:
        path: the JSON file.

    Returns:
        the pipeline and the feature plan, if any.

    Raises:
        VersionMismatch: if the document has another version.
        SchemaError: if the document does not follow the schema.
    """
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise SchemaError(f"Cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"Model {path} is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise SchemaError("Model document must be a JSON object")
    if document.get("version") != MODEL_VERSION:
        raise VersionMismatch(
            f"Model version {document.get('version')} is not supported; expected {MODEL_VERSION}"
        )
    serializer = ModelDocumentSerializer(data=document)
    if not serializer.is_valid():
        field_path, message = flatten_errors(serializer.errors)[0]
        raise SchemaError(f"{field_path}: {message}")
    validated = serializer.validated_data
    n, p = validated["n"], validated["p"]
    try:
        stages = [
            _build_stage(stage["kind"], stage["options"], n, p) for stage in validated["stages"]
        ]
        pipeline = Pipeline(tuple(stages), n, p)
        plan = None if validated["plan"] is None else _build_plan(validated["plan"])
    except (UserError, ValueError) as exc:
        raise SchemaError(f"Model {path} is inconsistent: {exc}") from exc
    if plan is not None and (plan.p, len(plan.outcomes)) != (p, n):
        raise SchemaError(f"Model {path} has a feature plan that does not match n={n}, p={p}")
    return pipeline, plan


def _covariance_columns(
    covariances: NDArray[np.float64], names: Sequence[str]
) -> dict[str, NDArray[np.float64]]:
    """Get the volatility and correlation columns of stacked covariances."""
    volatility = np.sqrt(np.diagonal(covariances, axis1=1, axis2=2))
    columns = {f"vol_{name}": volatility[:, j] for j, name in enumerate(names)}
    rows, cols = offdiag_indices(len(names))
    for i, j in zip(rows, cols):
        correlation = covariances[:, i, j] / (volatility[:, i] * volatility[:, j])
        columns[f"corr_{names[j]}_{names[i]}"] = correlation
    return columns


def _row_ids(result: WhitenResult, row_ids: Sequence[Any] | None) -> list[Any]:
    if row_ids is None:
        return result.rows.tolist()
    return [row_ids[row] for row in result.rows]


@tracer.start_as_current_span("report")
def report(
    result: WhitenResult,
    path: Path | str,
    names: Sequence[str] | None = None,
    row_ids: Sequence[Any] | None = None,
) -> pd.DataFrame:
    """Write the per-row report of a whitened dataset.

    Columns: row id, log-likelihood, log-determinant of the predicted covariance, the
    lower entries L_i_j of the whitener, volatilities, correlations and, for joint models,
    predicted means.

    Args:
        result: the whitened dataset.
        path: the output CSV file.
        names: the outcome names.
        row_ids: the id of every source row.

    Returns:
        the written table.
    """
    n = result.factors.shape[1]
    names = list(names) if names is not None else [f"y{j}" for j in range(n)]
    diag = np.diagonal(result.factors, axis1=1, axis2=2)
    columns: dict[str, Any] = {
        "row": _row_ids(result, row_ids),
        "loglik": result.loglik,
        "logdet": -2 * np.sum(np.log(diag), axis=1),
    }
    rows, cols = np.tril_indices(n)
    for i, j in zip(rows, cols):
        columns[f"L_{i}_{j}"] = result.factors[:, i, j]
    columns.update(_covariance_columns(result.covariances, names))
    if result.means is not None:
        columns.update({f"mean_{name}": result.means[:, j] for j, name in enumerate(names)})
    table = pd.DataFrame(columns)
    table.to_csv(path, index=False)
    logger.info("Wrote report of %d rows to %s", len(table), path)
    return table


def write_whitened(
    result: WhitenResult,
    path: Path | str,
    names: Sequence[str] | None = None,
    row_ids: Sequence[Any] | None = None,
) -> pd.DataFrame:
    """Write the whitened outcomes.

    Args:
        result: the whitened dataset.
        path: the output CSV file.
        names: the outcome names.
        row_ids: the id of every source row.

    Returns:
        the written table.
    """
    outcomes = result.whitened.outcomes
    names = list(names) if names is not None else [f"y{j}" for j in range(outcomes.shape[1])]
    table = pd.DataFrame(outcomes, columns=names)
    table.insert(0, "row", _row_ids(result, row_ids))
    table.to_csv(path, index=False)
    logger.info("Wrote %d whitened rows to %s", len(table), path)
    return table


def write_predictions(
    result: WhitenResult,
    path: Path | str,
    names: Sequence[str] | None = None,
    row_ids: Sequence[Any] | None = None,
) -> pd.DataFrame:
    """Write the predicted covariances and means.

    Args:
        result: the whitened dataset.
        path: the output CSV file.
        names: the outcome names.
        row_ids: the id of every source row.

    Returns:
        the written table.
    """
    n = result.covariances.shape[1]
    names = list(names) if names is not None else [f"y{j}" for j in range(n)]
    columns: dict[str, Any] = {"row": _row_ids(result, row_ids)}
    if result.means is not None:
        columns.update({f"mean_{name}": result.means[:, j] for j, name in enumerate(names)})
    columns.update(_covariance_columns(result.covariances, names))
    rows, cols = np.tril_indices(n)
    for i, j in zip(rows, cols):
        columns[f"cov_{names[j]}_{names[i]}"] = result.covariances[:, i, j]
    table = pd.DataFrame(columns)
    table.to_csv(path, index=False)
    logger.info("Wrote %d predictions to %s", len(table), path)
    return table
