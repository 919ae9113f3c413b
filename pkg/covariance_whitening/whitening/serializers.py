# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Serializers validating recipe and model documents."""

from typing import Any

from rest_framework import serializers

from .features import TransformKind
from .whiteners import STAGE_KINDS

RECIPE_VERSION = 1
MODEL_VERSION = 1


def flatten_errors(errors: Any, path: str = "") -> list[tuple[str, str]]:
    """Flatten nested serializer errors into (field path, message) pairs.

    Args:
        errors: the serializer errors, nested dicts and lists.
        path: the path of the enclosing field.

    Returns:
        the field paths, like "stages[1].memory", with their messages.
    """
    if isinstance(errors, dict):
        flat = []
        for key, value in errors.items():
            if key == "non_field_errors":
                name = path
            elif isinstance(key, int):
                name = f"{path}[{key}]"
            else:
                name = f"{path}.{key}" if path else str(key)
            flat += flatten_errors(value, name)
        return flat
    if isinstance(errors, list):
        if all(isinstance(item, str) for item in errors):
            return [(path, str(item)) for item in errors]
        flat = []
        for position, item in enumerate(errors):
            flat += flatten_errors(item, f"{path}[{position}]")
        return flat
    return [(path, str(errors))]


def matrix_field(**kwargs) -> serializers.ListField:
    """Build a field holding a list of float rows."""
    rows = serializers.ListField(child=serializers.FloatField())
    return serializers.ListField(child=rows, **kwargs)


def vector_field(**kwargs) -> serializers.ListField:
    """Build a field holding a list of floats."""
    return serializers.ListField(child=serializers.FloatField(), **kwargs)


class KindDispatchSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Serializer validating a "kind" and then the kind-specific fields.

    Attributes:
        kind: the kind.
        kind_serializers: the serializer class of each kind.
    """

    kind = serializers.ChoiceField(choices=STAGE_KINDS)
    kind_serializers: dict[str, type[serializers.Serializer]] = {}

    def to_internal_value(self, data):
        """Validate the kind, then the fields of that kind.

        Args:
            data: the raw document.

        Returns:
            the kind and its validated options.

        Raises:
            ValidationError: if the kind or an option is invalid.
        """
        attrs = super().to_internal_value(data)
        options = self.kind_serializers[attrs["kind"]](data=data)
        if not options.is_valid():
            raise serializers.ValidationError(options.errors)
        return {"kind": attrs["kind"], "options": dict(options.validated_data)}


class LoadingSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Options of stages fitted in closed form.

    Attributes:
        loading: diagonal loading added to the second moment.
    """

    loading = serializers.FloatField(min_value=0.0, default=0.0)


class DiagonalOptionsSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Options of a diagonal stage.

    Attributes:
        ridge: ridge weight on the coefficients.
    """

    ridge = serializers.FloatField(min_value=0.0, default=0.0)


class MovingAverageOptionsSerializer(LoadingSerializer):  # pylint: disable=abstract-method
    """Options of an sma stage.

    Attributes:
        memory: the window length.
    """

    memory = serializers.IntegerField(min_value=1)


class ExponentialOptionsSerializer(LoadingSerializer):  # pylint: disable=abstract-method
    """Options of an ewma stage.

    Attributes:
        half_life: the half-life in samples.
    """

    half_life = serializers.FloatField()

    def validate_half_life(self, value: float) -> float:
        """Check the half-life is positive.

        Args:
            value: the half-life.

        Returns:
            the half-life.

        Raises:
            ValidationError: if the half-life is not positive.
        """
        if not value > 0:
            raise serializers.ValidationError("Ensure this value is greater than 0.")
        return value


class PermutationOptionsSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Options of a permutation stage.

    Attributes:
        order: 0-based source index of every output entry.
    """

    order = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)


class RegressionOptionsSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Options of a regression stage; omitted settings keep their defaults.

    Attributes:
        epsilon: the diagonal floor.
        lambda1: ridge weight on (A, C).
        lambda2: ridge weight on (b − 1, d).
        lambda_mean: ridge weight on (E, f).
        trace_weight: weight of the trace-inverse regularizer.
        max_iters: solver iteration limit.
        grad_tolerance: solver tolerance.
        mean: whether to fit the mean offsets jointly.
    """

    epsilon = serializers.FloatField(required=False)
    lambda1 = serializers.FloatField(min_value=0.0, required=False)
    lambda2 = serializers.FloatField(min_value=0.0, required=False)
    lambda_mean = serializers.FloatField(min_value=0.0, required=False)
    trace_weight = serializers.FloatField(min_value=0.0, required=False)
    max_iters = serializers.IntegerField(min_value=1, required=False)
    grad_tolerance = serializers.FloatField(required=False)
    mean = serializers.BooleanField(default=False)

    def validate(self, attrs):
        """Check the positive settings.

        Args:
            attrs: the validated fields.

        Returns:
            the validated fields.

        Raises:
            ValidationError: if epsilon or grad_tolerance is not positive.
        """
        for name in ("epsilon", "grad_tolerance"):
            if name in attrs and not attrs[name] > 0:
                raise serializers.ValidationError({name: "Ensure this value is greater than 0."})
        return attrs


class RecipeStageSerializer(KindDispatchSerializer):  # pylint: disable=abstract-method
    """A stage to fit."""

    kind_serializers = {
        "constant": LoadingSerializer,
        "diagonal": DiagonalOptionsSerializer,
        "sma": MovingAverageOptionsSerializer,
        "ewma": ExponentialOptionsSerializer,
        "permutation": PermutationOptionsSerializer,
        "regression": RegressionOptionsSerializer,
    }


class FeatureSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """A feature column.

    Attributes:
        column: the column name, raw or synthesized.
        transform: the transform onto [-1, 1].
    """

    column = serializers.CharField()
    transform = serializers.ChoiceField(
        choices=[kind.value for kind in TransformKind], default=TransformKind.CLIP.value
    )


class TrailingSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Trailing averages to synthesize.

    Attributes:
        source: the averaged column.
        windows: the window lengths.
    """

    source = serializers.CharField()
    windows = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1)


class SplitSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Train/test split rule, by fraction of rows or by index value.

    Attributes:
        fraction: share of rows used for training.
        before: index value before which rows are used for training.
    """

    fraction = serializers.FloatField(required=False)
    before = serializers.CharField(required=False)

    def validate(self, attrs):
        """Check exactly one rule is given and the fraction lies in (0, 1).

        Args:
            attrs: the validated fields.

        Returns:
            the validated fields.

        Raises:
            ValidationError: if the rule is invalid.
        """
        if ("fraction" in attrs) == ("before" in attrs):
            raise serializers.ValidationError("Give exactly one of fraction and before.")
        if "fraction" in attrs and not 0 < attrs["fraction"] < 1:
            raise serializers.ValidationError({"fraction": "Ensure this value is in (0, 1)."})
        return attrs


class RecipeSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """A recipe: how to build datasets from a CSV file and which stages to fit.

    Attributes:
        version: the recipe format version.
        index: the index column, if any.
        outcomes: the outcome columns.
        features: the feature columns.
        trailing: the trailing averages to synthesize.
        split: the train/test split rule.
        stages: the stages to fit, in order.
        horizon: the number of future outcomes paired with each feature row.
    """

    version = serializers.IntegerField(default=RECIPE_VERSION)
    index = serializers.CharField(required=False, allow_null=True, default=None)
    outcomes = serializers.ListField(child=serializers.CharField(), min_length=1)
    features = FeatureSerializer(many=True, required=False)
    trailing = TrailingSerializer(many=True, required=False)
    split = SplitSerializer(required=False, allow_null=True, default=None)
    stages = RecipeStageSerializer(many=True)
    horizon = serializers.IntegerField(min_value=1, default=1)

    def validate_version(self, value: int) -> int:
        """Check the version is supported.

        Args:
            value: the version.

        Returns:
            the version.

        Raises:
            ValidationError: if the version is not supported.
        """
        if value != RECIPE_VERSION:
            raise serializers.ValidationError(f"Unsupported recipe version {value}.")
        return value


class ConstantParamsSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Parameters of a constant stage."""

    diag = vector_field(min_length=1)
    offdiag = vector_field()


class DiagonalParamsSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Parameters of a diagonal stage."""

    A = matrix_field()
    b = vector_field(min_length=1)


class MovingAverageParamsSerializer(LoadingSerializer):  # pylint: disable=abstract-method
    """Parameters of an sma stage."""

    memory = serializers.IntegerField(min_value=1)


class ExponentialParamsSerializer(LoadingSerializer):  # pylint: disable=abstract-method
    """Parameters of an ewma stage; a null half-life weighs all outcomes equally."""

    half_life = serializers.FloatField(allow_null=True)


class RegressionParamsSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """Parameters of a regression stage."""

    A = matrix_field()
    b = vector_field(min_length=1)
    C = matrix_field()
    d = vector_field()
    E = matrix_field(required=False, allow_null=True, default=None)
    f = vector_field(required=False, allow_null=True, default=None)
    epsilon = serializers.FloatField()


class ModelStageSerializer(KindDispatchSerializer):  # pylint: disable=abstract-method
    """A fitted stage."""

    kind_serializers = {
        "constant": ConstantParamsSerializer,
        "diagonal": DiagonalParamsSerializer,
        "sma": MovingAverageParamsSerializer,
        "ewma": ExponentialParamsSerializer,
        "permutation": PermutationOptionsSerializer,
        "regression": RegressionParamsSerializer,
    }


class TransformSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """A fitted transform."""

    kind = serializers.ChoiceField(choices=[kind.value for kind in TransformKind])
    knots = vector_field(default=list)
    levels = vector_field(default=list)
    low = serializers.FloatField(allow_null=True, default=None)
    high = serializers.FloatField(allow_null=True, default=None)


class FittedFeatureSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """A feature column with its fitted transform."""

    column = serializers.CharField()
    transform = TransformSerializer()


class PlanSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """How to build feature rows from a CSV file."""

    index = serializers.CharField(allow_null=True, default=None)
    outcomes = serializers.ListField(child=serializers.CharField(), min_length=1)
    features = FittedFeatureSerializer(many=True)
    trailing = TrailingSerializer(many=True)


class ModelDocumentSerializer(serializers.Serializer):  # pylint: disable=abstract-method
    """A fitted pipeline with the feature plan it was fitted with.

    Attributes:
        version: the model format version.
        n: outcome dimension.
        p: feature dimension.
        stages: the fitted stages.
        plan: the feature plan, if any.
    """

    version = serializers.IntegerField()
    n = serializers.IntegerField(min_value=1)
    p = serializers.IntegerField(min_value=0)
    stages = ModelStageSerializer(many=True)
    plan = PlanSerializer(required=False, allow_null=True, default=None)
