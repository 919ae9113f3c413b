# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Project settings."""

import os

SECRET_KEY = os.environ.get("DJANGO_SECRET_KEY", "")

DEBUG = os.getenv("DJANGO_DEBUG", "").lower() == "true"

INSTALLED_APPS = [
    "rest_framework",
    "whitening",
]

# Models are files on disk, not rows.
DATABASES: dict = {}

USE_TZ = True

REST_FRAMEWORK = {
    "UNAUTHENTICATED_USER": None,
}

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": "WARNING",
    },
    "loggers": {
        "django": {
            "handlers": ["console"],
            "level": os.getenv("DJANGO_LOG_LEVEL", "WARNING"),
            "propagate": False,
        },
        "whitening": {
            "handlers": ["console"],
            "level": os.getenv("WHITENING_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}
