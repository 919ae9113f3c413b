# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Predict module."""

from whitening.dataio import prepare, write_predictions
from whitening.forms import OutputForm
from whitening.management.base import WhiteningCommand, read_model
from whitening.whiteners import whiten_dataset


class Command(WhiteningCommand):
    """Command writing predicted covariances and means.

    Attrs:
        help: help message to display.
        form_class: the form validating the options.
    """

    help = (
        "Write the predicted covariance, volatilities, correlations and means of every "
        "feature row. Models with moving average stages also need the outcome columns."
    )
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
        """Predict every row.

        Args:
            options: the cleaned options.
        """
        pipeline, plan = read_model(options["model"])
        prepared = prepare(options["data"], plan, require_outcomes=pipeline.rolling)
        result = whiten_dataset(pipeline, prepared.data)
        table = write_predictions(result, options["out"], plan.outcomes, prepared.row_ids)
        self.stdout.write(f"Wrote {len(table)} predictions to {options['out']}")
