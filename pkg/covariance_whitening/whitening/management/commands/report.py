# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Report module."""

from whitening.dataio import prepare, report
from whitening.forms import OutputForm
from whitening.management.base import WhiteningCommand, read_model
from whitening.whiteners import whiten_dataset


class Command(WhiteningCommand):
    """Command writing the per-row report of a model on a CSV file.

    Attrs:
        help: help message to display.
        form_class: the form validating the options.
    """

    help = "Write per-row log-likelihoods, whiteners, volatilities and correlations."
    form_class = OutputForm

    def add_arguments(self, parser):
        """Argument parser.

        Args:
            parser: the cmd line parser.
        """
        parser.add_argument("--model", type=str, required=True)
        parser.add_argument("--data", type=str, required=True)
        parser.add_argument("--out", type=str, required=True)

    def run(self, options):
        """Write the report and print the score.

        Args:
            options: the cleaned options.
        """
        pipeline, plan = read_model(options["model"])
        prepared = prepare(options["data"], plan)
        result = whiten_dataset(pipeline, prepared.data)
        table = report(result, options["out"], plan.outcomes, prepared.row_ids)
        self.stdout.write(f"score: {table['loglik'].mean():.4f}")
        self.stdout.write(f"Wrote report of {len(table)} rows to {options['out']}")
