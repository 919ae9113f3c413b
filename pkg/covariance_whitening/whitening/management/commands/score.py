# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Score module."""

from whitening.dataio import prepare
from whitening.forms import ScoreForm
from whitening.management.base import WhiteningCommand, read_model
from whitening.whiteners import score


class Command(WhiteningCommand):
    """Command printing the average log-likelihood of a CSV file under a model.

    Attrs:
        help: help message to display.
        form_class: the form validating the options.
    """

    help = "Print the average log-likelihood per sample, in nats."
    form_class = ScoreForm

    def add_arguments(self, parser):
        """Argument parser.

        Args:
            parser: the cmd line parser.
        """
        parser.add_argument("--model", type=str, required=True)
        parser.add_argument("--data", type=str, required=True)

    def run(self, options):
        """Print the score.

        Args:
            options: the cleaned options.
        """
        pipeline, plan = read_model(options["model"])
        prepared = prepare(options["data"], plan)
        self.stdout.write(f"score: {score(pipeline, prepared.data):.4f}")
