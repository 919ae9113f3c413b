# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""App."""

from django.apps import AppConfig


class WhiteningConfig(AppConfig):
    """Whitening configuration.

    Attributes:
        name: name.
        verbose_name: human-readable name.
    """

    name = "whitening"
    verbose_name = "Covariance whitening"
