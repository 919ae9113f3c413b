#!/usr/bin/env python
"""Command-line entry point of the covariance whitening tools."""
import sys


def main():
    """Run a whitening command."""
    try:
        from whitening.cli import run  # pylint: disable=import-outside-toplevel
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    sys.exit(run(sys.argv))


if __name__ == "__main__":
    main()
