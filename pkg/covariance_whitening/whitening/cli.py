# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Command-line front end: fit, score, whiten, predict, report and the checks."""

import os
import sys
from typing import Sequence

from django.core.management import execute_from_command_line

COMMANDS = ("fit", "score", "whiten", "predict", "report", "oracle_check", "synthesize")
ALIASES = {"oracle-check": "oracle_check"}


def run(argv: Sequence[str] | None = None) -> int:
    """Run one command.

    Args:
        argv: the program name followed by the command and its options.

    Returns:
        the exit code: 0 on success, 1 on user errors, 2 on internal failures.
    """
    argv = list(sys.argv if argv is None else argv)
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "covariance_whitening.settings")
    if len(argv) < 2:
        sys.stderr.write(f"Usage: {argv[0] if argv else 'manage.py'} <command> [options]\n")
        sys.stderr.write(f"Commands: {', '.join(COMMANDS)}\n")
        return 1
    argv[1] = ALIASES.get(argv[1], argv[1])
    try:
        execute_from_command_line(argv)
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0
