# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Unit tests for the serializers module."""

from typing import Any

import pytest

from whitening.serializers import RecipeSerializer, flatten_errors
from whitening.synthetic import heteroscedastic_recipe


def _first_error(document: dict[str, Any]) -> tuple[str, str]:
    serializer = RecipeSerializer(data=document)
    assert not serializer.is_valid()
    return flatten_errors(serializer.errors)[0]


def test_flatten_errors():
    """
    arrange: given nested errors with lists and non-field errors.
    act: flatten them.
    assert: every message carries the path of its field.
    """
    errors = {
        "stages": [{}, {"memory": ["Too small."]}],
        "split": {"non_field_errors": ["Give one."]},
    }

    assert flatten_errors(errors) == [("stages[1].memory", "Too small."), ("split", "Give one.")]


def test_valid_recipe():
    """
    arrange: given the recipe of the synthetic dataset with an sma stage.
    act: validate it.
    assert: the stage options are typed and defaults are filled in.
    """
    serializer = RecipeSerializer(data=heteroscedastic_recipe("sma"))

    assert serializer.is_valid(), serializer.errors
    validated = serializer.validated_data
    assert validated["stages"] == [{"kind": "sma", "options": {"memory": 20, "loading": 0.0}}]
    assert validated["horizon"] == 1
    assert validated["features"][0]["transform"] == "minmax"


def test_regression_options_keep_only_given_settings():
    """
    arrange: given a regression stage with one ridge weight.
    act: validate the recipe.
    assert: only the given setting and the mean flag are in the options.
    """
    document = heteroscedastic_recipe()
    document["stages"] = [{"kind": "regression", "lambda1": 0.5}]
    serializer = RecipeSerializer(data=document)

    assert serializer.is_valid(), serializer.errors
    assert serializer.validated_data["stages"][0]["options"] == {"lambda1": 0.5, "mean": False}


@pytest.mark.parametrize(
    "stage, field",
    [
        pytest.param({"kind": "sma", "memory": 0}, "stages[0].memory", id="memory"),
        pytest.param({"kind": "sma"}, "stages[0].memory", id="missing memory"),
        pytest.param({"kind": "ewma", "half_life": -1.0}, "stages[0].half_life", id="half_life"),
        pytest.param({"kind": "regression", "epsilon": 0.0}, "stages[0].epsilon", id="epsilon"),
        pytest.param({"kind": "regression", "lambda2": -1.0}, "stages[0].lambda2", id="lambda2"),
        pytest.param({"kind": "garch"}, "stages[0].kind", id="kind"),
        pytest.param({"kind": "permutation", "order": []}, "stages[0].order", id="order"),
    ],
)
def test_invalid_stage(stage: dict[str, Any], field: str):
    """
    arrange: given a recipe with an invalid stage.
    act: validate it.
    assert: the first error names the offending field.
    """
    document = heteroscedastic_recipe()
    document["stages"] = [stage]

    path, _ = _first_error(document)

    assert path == field


@pytest.mark.parametrize(
    "changes, field",
    [
        pytest.param({"version": 2}, "version", id="version"),
        pytest.param({"outcomes": []}, "outcomes", id="outcomes"),
        pytest.param({"split": {"fraction": 0.5, "before": "5"}}, "split", id="two rules"),
        pytest.param({"split": {"fraction": 1.5}}, "split.fraction", id="fraction"),
        pytest.param({"horizon": 0}, "horizon", id="horizon"),
        pytest.param(
            {"features": [{"column": "signal", "transform": "log"}]},
            "features[0].transform",
            id="transform",
        ),
        pytest.param(
            {"trailing": [{"source": "signal", "windows": [0]}]},
            "trailing[0].windows[0]",
            id="window",
        ),
    ],
)
def test_invalid_recipe(changes: dict[str, Any], field: str):
    """
    arrange: given a recipe with an invalid top-level field.
    act: validate it.
    assert: the first error names the offending field.
    """
    document = {**heteroscedastic_recipe(), **changes}

    path, _ = _first_error(document)

    assert path == field
