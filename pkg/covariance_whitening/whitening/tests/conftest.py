# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.

"""Fixtures for unit tests."""

import io
import json
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pytest
from django.core.management import call_command

from whitening.synthetic import (
    PLANTED,
    heteroscedastic_frame,
    heteroscedastic_recipe,
    sample_planted,
)
from whitening.whiteners import Dataset


@pytest.fixture(scope="function", name="rng")
def rng_fixture() -> np.random.Generator:
    """Provide a seeded random generator."""
    return np.random.default_rng(0)


@pytest.fixture(scope="module", name="planted_data")
def planted_data_fixture() -> Dataset:
    """Provide samples of the planted whitener with one feature."""
    return sample_planted(PLANTED, 4000, seed=1)


@pytest.fixture(scope="function", name="write_json")
def write_json_fixture(tmp_path: Path) -> Callable[[str, Any], Path]:
    """Provide a helper writing a JSON document into the test directory."""

    def write(name: str, document: Any) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return write


@pytest.fixture(scope="function", name="write_csv")
def write_csv_fixture(tmp_path: Path) -> Callable[[str, str], Path]:
    """Provide a helper writing CSV text into the test directory."""

    def write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write


@pytest.fixture(scope="function", name="synthetic_csv")
def synthetic_csv_fixture(tmp_path: Path) -> Path:
    """Provide the planted heteroscedastic dataset as a CSV file."""
    path = tmp_path / "synthetic.csv"
    heteroscedastic_frame(1500, seed=3).to_csv(path, index=False)
    return path


@pytest.fixture(scope="function", name="recipe_path")
def recipe_path_fixture(write_json: Callable[[str, Any], Path]) -> Callable[[str], Path]:
    """Provide a helper writing the single-stage recipe of the synthetic dataset."""

    def write(kind: str = "regression") -> Path:
        return write_json(f"{kind}.json", heteroscedastic_recipe(kind))

    return write


@pytest.fixture(scope="function", name="fit_model")
def fit_model_fixture(
    tmp_path: Path, synthetic_csv: Path, recipe_path: Callable[[str], Path]
) -> Callable[[str], Path]:
    """Provide a helper fitting a single-stage model on the synthetic dataset."""

    def fit(kind: str = "regression") -> Path:
        model = tmp_path / f"{kind}-model.json"
        call_command(
            "fit",
            "--recipe",
            str(recipe_path(kind)),
            "--data",
            str(synthetic_csv),
            "--model",
            str(model),
            stdout=io.StringIO(),
        )
        return model

    return fit


@pytest.fixture(scope="module", name="planted_train")
def planted_train_fixture() -> Dataset:
    """Provide a large training sample of the planted whitener."""
    return sample_planted(PLANTED, 20000, seed=11)


@pytest.fixture(scope="module", name="planted_test")
def planted_test_fixture() -> Dataset:
    """Provide a large held-out sample of the planted whitener."""
    return sample_planted(PLANTED, 20000, seed=12)
