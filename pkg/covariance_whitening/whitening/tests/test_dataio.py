# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Unit tests for the dataio module."""

import json
import math
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
import pytest

from whitening.dataio import (
    ABS_OUTCOME_SUM,
    FeaturePlan,
    TrailingSpec,
    load,
    load_model,
    prepare,
    read_recipe,
    report,
    save_model,
    trailing_name,
    write_predictions,
    write_whitened,
)
from whitening.exceptions import (
    DimensionMismatch,
    ParseError,
    RecipeError,
    SchemaError,
    VersionMismatch,
)
from whitening.features import Transform, TransformKind
from whitening.linalg import LowerTriangular
from whitening.synthetic import PLANTED, PLANTED_MEAN, heteroscedastic_recipe
from whitening.whiteners import (
    ConstantStage,
    Dataset,
    DiagonalStage,
    ExponentialStage,
    MovingAverageStage,
    PermutationStage,
    Pipeline,
    RegressionStage,
    score,
    whiten_dataset,
)

SMALL_CSV = "t,x,y\n0,0.1,1.0\n1,0.2,-2.0\n2,0.3,0.5\n3,0.4,1.5\n4,0.5,-0.5\n5,0.6,2.0\n"


def _recipe(**changes: Any) -> dict[str, Any]:
    document = {
        "version": 1,
        "index": "t",
        "outcomes": ["y"],
        "features": [{"column": "x", "transform": "clip"}],
        "stages": [{"kind": "constant"}],
    }
    document.update(changes)
    return document


def test_read_recipe(recipe_path: Callable[[str], Path]):
    """
    arrange: given the recipe of the synthetic dataset.
    act: read it.
    assert: the recipe fields are typed.
    """
    recipe = read_recipe(recipe_path("ewma"))

    assert recipe.outcomes == ("y1", "y2")
    assert recipe.index == "t"
    assert recipe.features == (("signal", TransformKind.MINMAX),)
    assert recipe.split_fraction == 0.8 and recipe.split_before is None
    assert recipe.stages[0].kind == "ewma"
    assert recipe.stages[0].options == {"half_life": 20.0, "loading": 0.0}


def test_read_recipe_errors(write_json: Callable[[str, Any], Path], write_csv):
    """
    arrange: given a recipe that is not JSON and one with an invalid window.
    act: read them.
    assert: RecipeError is raised, naming the field when there is one.
    """
    broken = write_csv("broken.json", "{")
    invalid = write_json("invalid.json", _recipe(stages=[{"kind": "sma", "memory": 0}]))

    with pytest.raises(RecipeError):
        read_recipe(broken)
    with pytest.raises(RecipeError) as exc_info:
        read_recipe(invalid)

    assert exc_info.value.field == "stages[0].memory"


def test_load_splits_and_fits_transforms_on_training_rows(
    synthetic_csv: Path, recipe_path: Callable[[str], Path]
):
    """
    arrange: given the synthetic dataset and its recipe with a fractional split.
    act: load it.
    assert: the rows are split in order and the minmax range comes from the training rows.
    """
    loaded = load(synthetic_csv, read_recipe(recipe_path("regression")))

    assert loaded.train.size == 1200
    assert loaded.test is not None and loaded.test.size == 300
    assert loaded.dropped == 0
    raw = pd.read_csv(synthetic_csv)
    transform = loaded.plan.transforms[0]
    assert transform.low == pytest.approx(raw["signal"][:1200].min())
    assert transform.high == pytest.approx(raw["signal"][:1200].max())
    assert loaded.train.features.min() == -1.0 and loaded.train.features.max() == 1.0
    np.testing.assert_allclose(loaded.test.outcomes, raw[["y1", "y2"]].to_numpy()[1200:])
    np.testing.assert_array_equal(loaded.train.timestamps, np.arange(1200))


def test_load_parse_error(write_csv, write_json):
    """
    arrange: given a CSV file with a cell that is not a number.
    act: load it.
    assert: ParseError names the data row and the column.
    """
    data = write_csv("data.csv", "t,x,y\n0,0.1,1.0\n1,0.2,abc\n")

    with pytest.raises(ParseError) as exc_info:
        load(data, read_recipe(write_json("recipe.json", _recipe())))

    assert (exc_info.value.row, exc_info.value.column) == (2, "y")


def test_load_rejects_duplicate_header(write_csv, write_json):
    """
    arrange: given a CSV file with a repeated column name.
    act: load it.
    assert: ParseError is raised.
    """
    data = write_csv("data.csv", "t,x,y,y\n0,0.1,1.0,2.0\n")

    with pytest.raises(ParseError):
        load(data, read_recipe(write_json("recipe.json", _recipe())))


def test_load_missing_column(write_csv, write_json):
    """
    arrange: given a recipe naming an outcome column the file lacks.
    act: load the file.
    assert: RecipeError names the outcome entry.
    """
    data = write_csv("data.csv", SMALL_CSV)

    with pytest.raises(RecipeError) as exc_info:
        load(data, read_recipe(write_json("recipe.json", _recipe(outcomes=["y", "z"]))))

    assert exc_info.value.field == "outcomes[1]"


def test_trailing_average_uses_prior_rows(write_csv, write_json):
    """
    arrange: given a trailing average of x over two rows.
    act: load the file.
    assert: the first two rows are dropped and each feature averages the two rows before.
    """
    data = write_csv("data.csv", SMALL_CSV)
    name = trailing_name("x", 2)
    recipe = _recipe(
        features=[{"column": name, "transform": "clip"}],
        trailing=[{"source": "x", "windows": [2]}],
    )

    loaded = load(data, read_recipe(write_json("recipe.json", recipe)))

    assert loaded.dropped == 2
    assert loaded.test is None
    np.testing.assert_allclose(loaded.train.features[:, 0], [0.15, 0.25, 0.35, 0.45])
    np.testing.assert_array_equal(loaded.train.outcomes[:, 0], [0.5, 1.5, -0.5, 2.0])
    assert loaded.plan.columns == (name,)


def test_lagged_outcome_sum(write_csv, write_json):
    """
    arrange: given the lagged absolute outcome sum as a feature.
    act: load the file.
    assert: each feature is the absolute outcome of the row before.
    """
    data = write_csv("data.csv", SMALL_CSV)
    recipe = _recipe(features=[{"column": ABS_OUTCOME_SUM, "transform": "clip"}])

    loaded = load(data, read_recipe(write_json("recipe.json", recipe)))

    assert loaded.dropped == 1
    np.testing.assert_array_equal(loaded.train.features[:, 0], [1.0, 1.0, 0.5, 1.0, 0.5])
    assert loaded.plan.needs_outcomes


def test_split_before_date(write_csv, write_json):
    """
    arrange: given a date index and a split before the fourth date.
    act: load the file.
    assert: three rows train and three rows test.
    """
    dates = "\n".join(f"2024-01-0{day},0.{day},{day}.0" for day in range(1, 7))
    data = write_csv("data.csv", f"date,x,y\n{dates}\n")
    recipe = _recipe(index="date", split={"before": "2024-01-04"})

    loaded = load(data, read_recipe(write_json("recipe.json", recipe)))

    assert loaded.train.size == 3
    assert loaded.test is not None and loaded.test.size == 3
    assert np.all(np.diff(loaded.train.timestamps) == 1.0)


def test_split_before_needs_index(write_csv, write_json):
    """
    arrange: given a split by index value without an index column.
    act: load the file.
    assert: RecipeError names the split.
    """
    data = write_csv("data.csv", SMALL_CSV)
    recipe = _recipe(index=None, split={"before": "3"})

    with pytest.raises(RecipeError) as exc_info:
        load(data, read_recipe(write_json("recipe.json", recipe)))

    assert exc_info.value.field == "split"


def test_horizon_replicates_rows(write_csv, write_json):
    """
    arrange: given a recipe with a horizon of three.
    act: load the file.
    assert: every feature row but the last two is paired with three outcomes.
    """
    data = write_csv("data.csv", SMALL_CSV)

    loaded = load(data, read_recipe(write_json("recipe.json", _recipe(horizon=3))))

    assert loaded.train.size == 4 * 3
    np.testing.assert_array_equal(loaded.train.outcomes[:3, 0], [1.0, -2.0, 0.5])


def _full_pipeline() -> Pipeline:
    return Pipeline(
        (
            ConstantStage(LowerTriangular([1.5, 0.7], [0.4])),
            DiagonalStage(np.array([[0.5], [-1.0]]), np.array([0.1, 0.2])),
            MovingAverageStage(2, 5, 0.1),
            ExponentialStage(2, math.inf),
            ExponentialStage(2, 1 / 3),
            PermutationStage((1, 0)),
            RegressionStage(PLANTED_MEAN, 1e-6),
        ),
        2,
        1,
    )


def _plan() -> FeaturePlan:
    return FeaturePlan(
        outcomes=("y1", "y2"),
        columns=("signal",),
        transforms=(Transform(TransformKind.QUANTILE, knots=(0.1, 0.7), levels=(-0.5, 0.5)),),
        index="t",
        trailing=(TrailingSpec("signal", (3, 5)),),
    )


def test_model_round_trip_is_bit_exact(tmp_path: Path):
    """
    arrange: given a pipeline with every stage kind and a feature plan.
    act: save, load and save it again.
    assert: the parameters are bit-identical and both files are byte-identical.
    """
    first, second = tmp_path / "first.json", tmp_path / "second.json"
    pipeline, plan = _full_pipeline(), _plan()

    save_model(pipeline, plan, first)
    loaded, loaded_plan = load_model(first)
    save_model(loaded, loaded_plan, second)

    assert first.read_bytes() == second.read_bytes()
    assert loaded_plan is not None
    assert (loaded_plan.columns, loaded_plan.index) == (plan.columns, plan.index)
    assert loaded_plan.trailing == plan.trailing
    assert loaded_plan.transforms[0].knots == (0.1, 0.7)
    assert loaded_plan.transforms[0].levels == (-0.5, 0.5)
    assert [stage.kind for stage in loaded.stages] == [stage.kind for stage in pipeline.stages]
    np.testing.assert_array_equal(loaded.stages[0].factor.offdiag, [0.4])
    assert loaded.stages[3].half_life == math.inf
    assert loaded.stages[4].half_life == 1 / 3
    np.testing.assert_array_equal(loaded.stages[6].params.flatten(), PLANTED_MEAN.flatten())
    document = json.loads(first.read_text(encoding="utf-8"))
    assert document["stages"][3]["half_life"] is None


def test_model_without_plan(tmp_path: Path):
    """
    arrange: given a pipeline saved without a feature plan.
    act: load it.
    assert: the plan is None.
    """
    path = tmp_path / "model.json"
    save_model(Pipeline((ConstantStage(LowerTriangular.identity(2)),), 2, 0), None, path)

    pipeline, plan = load_model(path)

    assert plan is None
    assert pipeline.p == 0


@pytest.mark.parametrize(
    "changes, error",
    [
        pytest.param({"version": 2}, VersionMismatch, id="version"),
        pytest.param({"stages": [{"kind": "sma"}]}, SchemaError, id="missing field"),
        pytest.param({"n": 3}, SchemaError, id="dimension"),
        pytest.param({"p": 2}, SchemaError, id="plan dimension"),
    ],
)
def test_load_model_errors(tmp_path: Path, write_json, changes: dict[str, Any], error: type):
    """
    arrange: given a saved model document with one field changed.
    act: load it.
    assert: the matching error is raised.
    """
    path = tmp_path / "model.json"
    save_model(Pipeline((ConstantStage(LowerTriangular.identity(2)),), 2, 1), _plan(), path)
    document = {**json.loads(path.read_text(encoding="utf-8")), **changes}

    with pytest.raises(error):
        load_model(write_json("changed.json", document))


def test_load_model_not_json(write_csv):
    """
    arrange: given a model file that is not JSON.
    act: load it.
    assert: SchemaError is raised.
    """
    with pytest.raises(SchemaError):
        load_model(write_csv("model.json", "not json"))


def test_prepare_outcomes(write_csv):
    """
    arrange: given a plan with two outcomes and files with one or none of them.
    act: prepare the files with and without requiring outcomes.
    assert: partial outcomes are rejected and absent outcomes are zero when optional.
    """
    plan = FeaturePlan(
        outcomes=("y", "z"),
        columns=("x",),
        transforms=(Transform(TransformKind.CLIP),),
        index="t",
    )
    partial = write_csv("partial.csv", SMALL_CSV)
    features_only = write_csv("features.csv", "t,x\n0,0.1\n1,0.2\n")

    with pytest.raises(DimensionMismatch):
        prepare(partial, plan, require_outcomes=False)
    with pytest.raises(DimensionMismatch):
        prepare(features_only, plan)
    prepared = prepare(features_only, plan, require_outcomes=False)

    assert not prepared.has_outcomes
    assert prepared.row_ids == ["0", "1"]
    np.testing.assert_array_equal(prepared.data.outcomes, np.zeros((2, 2)))


def _joint_result():
    features = np.array([[0.1], [-0.4], [0.7]])
    outcomes = np.array([[0.3, -1.0], [1.2, 0.4], [-0.6, 0.9]])
    pipeline = Pipeline((RegressionStage(PLANTED_MEAN),), 2, 1)
    return whiten_dataset(pipeline, Dataset(features, outcomes))


def test_report_columns(tmp_path: Path):
    """
    arrange: given a joint model applied to three samples.
    act: write the report.
    assert: the columns follow the outcome names and the values match the predictions.
    """
    result = _joint_result()

    table = report(result, tmp_path / "report.csv", ["a", "b"], ["r0", "r1", "r2"])

    assert list(table.columns) == [
        "row",
        "loglik",
        "logdet",
        "L_0_0",
        "L_1_0",
        "L_1_1",
        "vol_a",
        "vol_b",
        "corr_a_b",
        "mean_a",
        "mean_b",
    ]
    assert table["row"].tolist() == ["r0", "r1", "r2"]
    np.testing.assert_allclose(table["logdet"], np.linalg.slogdet(result.covariances)[1])
    covariance = result.covariances[1]
    assert table["corr_a_b"][1] == pytest.approx(
        covariance[1, 0] / math.sqrt(covariance[0, 0] * covariance[1, 1])
    )
    assert pd.read_csv(tmp_path / "report.csv").shape == (3, 11)


def test_prediction_and_whitened_columns(tmp_path: Path):
    """
    arrange: given a joint model applied to three samples.
    act: write the predictions and the whitened outcomes.
    assert: the columns follow the outcome names.
    """
    result = _joint_result()

    predictions = write_predictions(result, tmp_path / "predictions.csv", ["a", "b"])
    whitened = write_whitened(result, tmp_path / "whitened.csv")

    assert list(predictions.columns) == [
        "row",
        "mean_a",
        "mean_b",
        "vol_a",
        "vol_b",
        "corr_a_b",
        "cov_a_a",
        "cov_a_b",
        "cov_b_b",
    ]
    np.testing.assert_allclose(predictions["cov_a_b"], result.covariances[:, 1, 0])
    assert list(whitened.columns) == ["row", "y0", "y1"]
    assert whitened["row"].tolist() == [0, 1, 2]


def test_trailing_features_ignore_later_rows(rng: np.random.Generator, write_csv, write_json):
    """
    arrange: given a file and a copy whose rows after the twentieth are shuffled.
    act: load both with a trailing average and the lagged outcome sum.
    assert: the features of the first twenty rows are identical.
    """
    frame = pd.DataFrame(
        {"t": np.arange(40), "x": rng.uniform(-1, 1, size=40), "y": rng.normal(size=40)}
    )
    shuffled = frame.copy()
    later = rng.permutation(np.arange(20, 40))
    shuffled.loc[20:, ["x", "y"]] = frame.loc[later, ["x", "y"]].to_numpy()
    recipe = read_recipe(
        write_json(
            "recipe.json",
            _recipe(
                features=[
                    {"column": trailing_name("x", 3), "transform": "clip"},
                    {"column": ABS_OUTCOME_SUM, "transform": "clip"},
                ],
                trailing=[{"source": "x", "windows": [3]}],
            ),
        )
    )

    original = load(write_csv("original.csv", frame.to_csv(index=False)), recipe)
    permuted = load(write_csv("shuffled.csv", shuffled.to_csv(index=False)), recipe)

    assert original.dropped == permuted.dropped == 3
    np.testing.assert_array_equal(original.train.features[:17], permuted.train.features[:17])
    assert not np.array_equal(original.train.features, permuted.train.features)


def test_transforms_do_not_see_test_rows(
    tmp_path: Path, synthetic_csv: Path, recipe_path: Callable[[str], Path], write_json
):
    """
    arrange: given the synthetic dataset with an extreme signal in one test row.
    act: load it with the default split, and with the transforms fitted on every row.
    assert: training features and the fitted plan ignore the test rows, while refitting on
        every row changes the held-out features and their score.
    """
    raw = pd.read_csv(synthetic_csv)
    altered = raw.copy()
    altered.loc[1400, "signal"] = 500.0
    altered_csv = tmp_path / "altered.csv"
    altered.to_csv(altered_csv, index=False)
    recipe = read_recipe(recipe_path("regression"))
    document = heteroscedastic_recipe("regression")
    document["split"] = None
    everything = read_recipe(write_json("everything.json", document))

    clean = load(synthetic_csv, recipe)
    split = load(altered_csv, recipe)
    leaky = load(altered_csv, everything)

    fitted, reference = split.plan.transforms[0], clean.plan.transforms[0]
    assert (fitted.low, fitted.high) == (reference.low, reference.high)
    np.testing.assert_array_equal(split.train.features, clean.train.features)
    assert leaky.plan.transforms[0].high == 500.0
    leaked = leaky.train.take(np.arange(1200, 1500))
    pipeline = Pipeline((RegressionStage(PLANTED),), 2, 1)
    assert not np.array_equal(leaked.features, split.test.features)
    assert score(pipeline, leaked) != score(pipeline, split.test)


def test_report_loglik_averages_to_score(tmp_path: Path, rng: np.random.Generator):
    """
    arrange: given a regression pipeline and samples.
    act: write the report of the whitened samples.
    assert: the mean reported log-likelihood equals the score.
    """
    data = Dataset(rng.uniform(-1, 1, size=(100, 1)), rng.normal(size=(100, 2)))
    pipeline = Pipeline((RegressionStage(PLANTED_MEAN),), 2, 1)

    table = report(whiten_dataset(pipeline, data), tmp_path / "report.csv")

    assert table["loglik"].mean() == pytest.approx(score(pipeline, data), abs=1e-12)
