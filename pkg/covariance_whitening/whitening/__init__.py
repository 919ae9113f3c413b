# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Feature-dependent covariance prediction by whitening."""
