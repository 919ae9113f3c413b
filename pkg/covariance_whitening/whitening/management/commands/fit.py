# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Fit module."""

import dataclasses
import logging

from whitening.dataio import load, read_recipe, save_model
from whitening.forms import FitForm
from whitening.management.base import WhiteningCommand
from whitening.objective import FitConfig
from whitening.solver import fit_pipeline
from whitening.whiteners import score

logger = logging.getLogger(__name__)


class Command(WhiteningCommand):
    """Command fitting the pipeline of a recipe.

    Attrs:
        help: help message to display.
        form_class: the form validating the options.
    """

    help = "Fit the stages of a recipe on a CSV file and write the model."
    form_class = FitForm

    def add_arguments(self, parser):
        """Argument parser.

        Args:
            parser: the cmd line parser.
        """
        parser.add_argument("--recipe", type=str, required=True)
        parser.add_argument("--data", type=str, required=True)
        parser.add_argument("--model", type=str, required=True)
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--threads", type=int, default=None)
        parser.add_argument("--fast-unconstrained", action="store_true")
        parser.add_argument("--horizon", type=int, default=None)

    def run(self, options):
        """Fit the pipeline, write the model and print the scores.

        Args:
            options: the cleaned options.
        """
        recipe = read_recipe(options["recipe"])
        if options["horizon"]:
            recipe = dataclasses.replace(recipe, horizon=options["horizon"])
        # Fitting is deterministic; the seed only labels the run.
        logger.info("Fitting %s with seed %d", options["recipe"], options["seed"])
        loaded = load(options["data"], recipe)
        overrides = {"fast_unconstrained": options["fast_unconstrained"]}
        if options["threads"]:
            overrides["threads"] = options["threads"]
        pipeline = fit_pipeline(loaded.train, recipe.stages, FitConfig(**overrides))
        save_model(pipeline, loaded.plan, options["model"])
        self.stdout.write(f"train score: {score(pipeline, loaded.train):.4f}")
        if loaded.test is not None:
            self.stdout.write(f"test score: {score(pipeline, loaded.test):.4f}")
