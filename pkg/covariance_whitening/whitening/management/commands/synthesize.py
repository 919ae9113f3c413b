# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Synthesize module."""

import json
from pathlib import Path

from whitening.forms import SYNTHETIC_KINDS, SynthesizeForm
from whitening.management.base import WhiteningCommand
from whitening.synthetic import heteroscedastic_frame, heteroscedastic_recipe


class Command(WhiteningCommand):
    """Command writing the planted heteroscedastic dataset.

    Attrs:
        help: help message to display.
        form_class: the form validating the options.
    """

    help = "Write a dataset sampled from a planted regression whitener, and a recipe for it."
    form_class = SynthesizeForm

    def add_arguments(self, parser):
        """Argument parser.

        Args:
            parser: the cmd line parser.
        """
        parser.add_argument("--out", type=str, required=True)
        parser.add_argument("--recipe", type=str, default=None)
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--rows", type=int, default=2000)
        parser.add_argument("--kind", type=str, choices=SYNTHETIC_KINDS, default="regression")

    def run(self, options):
        """Write the dataset and the recipe.

        Args:
            options: the cleaned options.
        """
        frame = heteroscedastic_frame(options["rows"], options["seed"])
        frame.to_csv(options["out"], index=False)
        self.stdout.write(f"Wrote {len(frame)} rows to {options['out']}")
        if options["recipe"]:
            recipe = heteroscedastic_recipe(options["kind"])
            Path(options["recipe"]).write_text(json.dumps(recipe, indent=2), encoding="utf-8")
            self.stdout.write(f"Wrote recipe to {options['recipe']}")
