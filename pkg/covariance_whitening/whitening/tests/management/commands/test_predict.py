# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Unit tests for the predict module."""

import io
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError


def _features_only(tmp_path: Path, synthetic_csv: Path) -> Path:
    path = tmp_path / "features.csv"
    pd.read_csv(synthetic_csv).drop(columns=["y1", "y2"]).to_csv(path, index=False)
    return path


def test_predict_features_only(
    tmp_path: Path, synthetic_csv: Path, fit_model: Callable[[str], Path]
):
    """
    arrange: given a fitted regression model and a file without outcome columns.
    act: call the predict command.
    assert: every row gets a positive definite covariance with matching volatilities.
    """
    model, out = fit_model("regression"), tmp_path / "predictions.csv"
    stdout = io.StringIO()

    call_command(
        "predict",
        "--model",
        str(model),
        "--data",
        str(_features_only(tmp_path, synthetic_csv)),
        "--out",
        str(out),
        stdout=stdout,
    )

    table = pd.read_csv(out)
    assert len(table) == 1500
    assert {"row", "vol_y1", "corr_y1_y2", "cov_y1_y1", "cov_y1_y2"} <= set(table.columns)
    np.testing.assert_allclose(table["vol_y1"] ** 2, table["cov_y1_y1"], rtol=1e-9)
    assert (table["corr_y1_y2"].abs() < 1).all()
    assert "Wrote 1500 predictions" in stdout.getvalue()


def test_predict_rolling_needs_outcomes(
    tmp_path: Path, synthetic_csv: Path, fit_model: Callable[[str], Path]
):
    """
    arrange: given a fitted moving average model and a file without outcome columns.
    act: call the predict command.
    assert: a CommandError with the user error code is raised.
    """
    model = fit_model("sma")

    with pytest.raises(CommandError) as exc_info:
        call_command(
            "predict",
            "--model",
            str(model),
            "--data",
            str(_features_only(tmp_path, synthetic_csv)),
            "--out",
            str(tmp_path / "predictions.csv"),
        )

    assert exc_info.value.returncode == 1
