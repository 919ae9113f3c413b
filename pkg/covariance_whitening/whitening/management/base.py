# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Base class of the whitening commands."""

import sys
from typing import Any

from django.core.management.base import BaseCommand, CommandError
from django.forms import Form

from whitening.dataio import FeaturePlan, load_model
from whitening.exceptions import InternalError, SchemaError, UserError
from whitening.whiteners import Pipeline

USER_ERROR = 1
INTERNAL_ERROR = 2


class WhiteningCommand(BaseCommand):
    """Command validating its options with a form and mapping errors to exit codes.

    User errors exit with code 1, internal failures with code 2.

    Attrs:
        requires_system_checks: no system checks; the commands touch no database.
        form_class: the form validating the options.
    """

    requires_system_checks: list[str] = []
    form_class: type[Form] = Form

    def create_parser(self, prog_name, subcommand, **kwargs):
        """Build the parser; usage errors exit with the user error code.

        Args:
            prog_name: the program name.
            subcommand: the command name.
            kwargs: parser options.

        Returns:
            the parser.
        """
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        default_error = parser.error

        def error(message):
            if parser.called_from_command_line:
                parser.print_usage(sys.stderr)
                parser.exit(USER_ERROR, f"{parser.prog}: error: {message}\n")
            default_error(message)

        parser.error = error  # type: ignore[method-assign]
        return parser

    def clean_options(self, options: dict[str, Any]) -> dict[str, Any]:
        """Validate the options with the form.

        Args:
            options: the parsed options.

        Returns:
            the cleaned options.

        Raises:
            CommandError: naming the first invalid option.
        """
        form = self.form_class(data={k: v for k, v in options.items() if v is not None})
        if not form.is_valid():
            name, errors = next(iter(form.errors.items()))
            raise CommandError(f"{name}: {errors[0]}", returncode=USER_ERROR)
        return form.cleaned_data

    def handle(self, *args, **options):
        """Command handler.

        Args:
            args: args.
            options: options.

        Raises:
            CommandError: if the command fails.
        """
        cleaned = self.clean_options(options)
        try:
            self.run(cleaned)
        except UserError as exc:
            raise CommandError(str(exc), returncode=USER_ERROR) from exc
        except InternalError as exc:
            raise CommandError(str(exc), returncode=INTERNAL_ERROR) from exc

    def run(self, options: dict[str, Any]) -> None:
        """Do the work of the command.

        Args:
            options: the cleaned options.
        """
        raise NotImplementedError


def read_model(path: str) -> tuple[Pipeline, FeaturePlan]:
    """Read a model that can be applied to CSV files.

    Args:
        path: the model document.

    Returns:
        the pipeline and its feature plan.

    Raises:
        SchemaError: if the model carries no feature plan.
    """
    pipeline, plan = load_model(path)
    if plan is None:
        raise SchemaError(f"Model {path} has no feature plan and cannot read CSV files")
    return pipeline, plan
