# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Unit tests for the cli module."""

from pathlib import Path

import pytest

from whitening.cli import run


def test_no_command(capsys: pytest.CaptureFixture[str]):
    """
    arrange: do nothing.
    act: run without a command.
    assert: the usage is printed and the user error code returned.
    """
    assert run(["manage.py"]) == 1
    assert "Usage:" in capsys.readouterr().err


def test_missing_required_option():
    """
    arrange: do nothing.
    act: run the fit command without its options.
    assert: the user error code is returned.
    """
    assert run(["manage.py", "fit"]) == 1


def test_oracle_check_alias():
    """
    arrange: do nothing.
    act: run the dashed oracle check command with one suite.
    assert: it succeeds.
    """
    assert run(["manage.py", "oracle-check", "--suite", "round_trip"]) == 0


def test_end_to_end(tmp_path: Path, capsys: pytest.CaptureFixture[str]):
    """
    arrange: synthesize a dataset and its recipe.
    act: fit a model on it and score the dataset.
    assert: every step succeeds and the score is printed.
    """
    data, recipe, model = tmp_path / "data.csv", tmp_path / "recipe.json", tmp_path / "model.json"

    assert run(["manage.py", "synthesize", "--out", str(data), "--recipe", str(recipe)]) == 0
    fit = ["manage.py", "fit", "--recipe", str(recipe), "--data", str(data), "--model", str(model)]
    assert run(fit) == 0
    assert run(["manage.py", "score", "--model", str(model), "--data", str(data)]) == 0
    assert "score: " in capsys.readouterr().out


def test_user_error_code(tmp_path: Path):
    """
    arrange: do nothing.
    act: run the score command on files that do not exist.
    assert: the user error code is returned.
    """
    missing = str(tmp_path / "missing.json")

    assert run(["manage.py", "score", "--model", missing, "--data", missing]) == 1
