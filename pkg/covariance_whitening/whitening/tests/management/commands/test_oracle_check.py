# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Unit tests for the oracle check module."""

import io

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from whitening import oracles


def test_selected_suites_pass():
    """
    arrange: do nothing.
    act: call the oracle check command with two suites.
    assert: both suites are reported as passing.
    """
    out = io.StringIO()

    call_command("oracle_check", "--suite", "round_trip", "--suite", "feasibility", stdout=out)

    lines = out.getvalue().splitlines()
    assert [line.split(":")[0] for line in lines] == ["round_trip", "feasibility"]
    assert all(": pass " in line for line in lines)


def test_unknown_suite():
    """
    arrange: do nothing.
    act: call the oracle check command with an unknown suite.
    assert: a CommandError is raised.
    """
    with pytest.raises(CommandError):
        call_command("oracle_check", "--suite", "everything")


def test_failing_suite(monkeypatch: pytest.MonkeyPatch):
    """
    arrange: given a suite that always fails.
    act: call the oracle check command with that suite.
    assert: a CommandError with the internal error code is raised.
    """
    monkeypatch.setitem(
        oracles.SUITES,
        "round_trip",
        lambda seed: oracles.OracleOutcome("round_trip", False, f"seed {seed}"),
    )

    with pytest.raises(CommandError) as exc_info:
        call_command("oracle_check", "--suite", "round_trip", stdout=io.StringIO())

    assert exc_info.value.returncode == 2
    assert "round_trip" in str(exc_info.value)
