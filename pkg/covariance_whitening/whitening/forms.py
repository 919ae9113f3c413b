# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Forms validating command options before any work begins."""

from pathlib import Path

from django.core.exceptions import ValidationError
from django.forms import BooleanField, CharField, ChoiceField, Form, IntegerField
from opentelemetry import trace

tracer = trace.get_tracer(__name__)

SYNTHETIC_KINDS = ("constant", "diagonal", "sma", "ewma", "regression")


class ExistingFileField(CharField):
    """Path of a file that must exist."""

    @tracer.start_as_current_span("ExistingFileField.validate")
    def validate(self, value) -> None:
        """Check the value names an existing regular file.

        Args:
            value: field value.

        Raises:
            ValidationError: if the file does not exist.
        """
        #  Pylint falsely detects no super class method.
        super().validate(value)  # pylint: disable=no-member
        if value and not Path(value).is_file():
            raise ValidationError(
                message="File %(value)s does not exist", code="invalid", params={"value": value}
            )


class OutputPathField(CharField):
    """Path of a file to write, whose directory must exist."""

    @tracer.start_as_current_span("OutputPathField.validate")
    def validate(self, value) -> None:
        """Check the parent directory exists and the path is not a directory.

        Args:
            value: field value.

        Raises:
            ValidationError: if the file cannot be written there.
        """
        super().validate(value)  # pylint: disable=no-member
        if not value:
            return
        path = Path(value)
        if path.is_dir():
            raise ValidationError(
                message="%(value)s is a directory", code="invalid", params={"value": value}
            )
        if not path.resolve().parent.is_dir():
            raise ValidationError(
                message="Directory of %(value)s does not exist",
                code="invalid",
                params={"value": value},
            )


class FitForm(Form):
    """Options of the fit command.

    Attributes:
        recipe: the recipe document.
        data: the CSV file.
        model: the model file to write.
        seed: the random seed.
        threads: worker threads for the objective.
        fast_unconstrained: whether to try the unconstrained solve first.
        horizon: the number of future outcomes per feature row, overriding the recipe.
    """

    recipe = ExistingFileField(label="recipe")
    data = ExistingFileField(label="data")
    model = OutputPathField(label="model")
    seed = IntegerField(label="seed", min_value=0)
    threads = IntegerField(label="threads", min_value=1, required=False)
    fast_unconstrained = BooleanField(label="fast-unconstrained", required=False)
    horizon = IntegerField(label="horizon", min_value=1, required=False)


class ScoreForm(Form):
    """Options of commands that read a model and a CSV file.

    Attributes:
        model: the model document.
        data: the CSV file.
    """

    model = ExistingFileField(label="model")
    data = ExistingFileField(label="data")


class OutputForm(ScoreForm):
    """Options of commands that also write a CSV file.

    Attributes:
        out: the CSV file to write.
    """

    out = OutputPathField(label="out")


class SynthesizeForm(Form):
    """Options of the synthesize command.

    Attributes:
        out: the CSV file to write.
        recipe: the recipe file to write.
        seed: the random seed.
        rows: the number of rows.
        kind: the single stage of the recipe.
    """

    out = OutputPathField(label="out")
    recipe = OutputPathField(label="recipe", required=False)
    seed = IntegerField(label="seed", min_value=0)
    rows = IntegerField(label="rows", min_value=2)
    kind = ChoiceField(label="kind", choices=[(kind, kind) for kind in SYNTHETIC_KINDS])
