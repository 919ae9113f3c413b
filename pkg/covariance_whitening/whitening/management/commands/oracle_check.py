# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Oracle check module."""

from django.core.management.base import CommandError

from whitening.management.base import INTERNAL_ERROR, WhiteningCommand
from whitening.oracles import SUITES, run_all


class Command(WhiteningCommand):
    """Command running the brute-force checks of the numerical core.

    Attrs:
        help: help message to display.
    """

    help = "Run the brute-force checks and print one line per suite."

    def add_arguments(self, parser):
        """Argument parser.

        Args:
            parser: the cmd line parser.
        """
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--suite", action="append", choices=sorted(SUITES), default=None)

    def clean_options(self, options):
        """Keep the parsed options; argparse already checks them.

        Args:
            options: the parsed options.

        Returns:
            the options.
        """
        return options

    def run(self, options):
        """Run the suites.

        Args:
            options: the options.

        Raises:
            CommandError: if a suite fails.
        """
        outcomes = run_all(options["seed"], options["suite"])
        for outcome in outcomes:
            status = "pass" if outcome.passed else "FAIL"
            self.stdout.write(f"{outcome.name}: {status} ({outcome.detail})")
        failed = [outcome.name for outcome in outcomes if not outcome.passed]
        if failed:
            raise CommandError(f"Failed suites: {', '.join(failed)}", returncode=INTERNAL_ERROR)
