# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Whiten module."""

from whitening.dataio import prepare, write_whitened
from whitening.forms import OutputForm
from whitening.management.base import WhiteningCommand, read_model
from whitening.whiteners import whiten_dataset


class Command(WhiteningCommand):
    """Command writing whitened outcomes.

    Attrs:
        help: help message to display.
        form_class: the form validating the options.
    """

    help = "Write the outcomes of a CSV file whitened by a model."
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
        """Whiten the file.

        Args:
            options: the cleaned options.
        """
        pipeline, plan = read_model(options["model"])
        prepared = prepare(options["data"], plan)
        result = whiten_dataset(pipeline, prepared.data)
        table = write_whitened(result, options["out"], plan.outcomes, prepared.row_ids)
        self.stdout.write(f"Wrote {len(table)} whitened rows to {options['out']}")
