# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Settings."""

import os

EPSILON = float(os.getenv("WHITENING_EPSILON", default="1e-6"))
LBFGS_MEMORY = int(os.getenv("WHITENING_LBFGS_MEMORY", default="10"))
MAX_ITERS = int(os.getenv("WHITENING_MAX_ITERS", default="500"))
GRAD_TOLERANCE = float(os.getenv("WHITENING_GRAD_TOLERANCE", default="1e-7"))
THREADS = int(os.getenv("WHITENING_THREADS", default="1"))
# Row block size of the objective reduction; results depend on it, not on THREADS.
CHUNK_ROWS = int(os.getenv("WHITENING_CHUNK_ROWS", default="2048"))
