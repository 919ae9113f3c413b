# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Test settings."""

# pylint:disable=wildcard-import,unused-wildcard-import

import secrets

from covariance_whitening.settings import *  # noqa: F401, F403

SECRET_KEY = secrets.token_hex()

DEBUG = True
