# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Samples from planted regression whiteners."""

from typing import Any

import numpy as np
import pandas as pd

from .linalg import batch_solve_lower, stack_dense
from .objective import RegressionParams
from .whiteners import Dataset

PLANTED = RegressionParams(
    A=np.array([[0.6], [-0.4]]),
    b=np.array([1.0, 0.9]),
    C=np.array([[0.5]]),
    d=np.array([0.2]),
)
PLANTED_MEAN = RegressionParams(
    A=np.array([[0.3], [0.2]]),
    b=np.array([1.0, 1.2]),
    C=np.array([[-0.3]]),
    d=np.array([0.1]),
    E=np.array([[0.8], [-0.5]]),
    f=np.array([0.4, -0.2]),
)
SIGNAL_CENTER = 50.0
SIGNAL_SCALE = 20.0


def sample_outcomes(
    params: RegressionParams, features: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw y with L(x)ᵀy − ν(x) standard normal.

    Args:
        params: the planted parameters.
        features: the features, N×p.
        rng: the random generator.

    Returns:
        the outcomes, N×n.
    """
    diag = features @ params.A.T + params.b
    factors = stack_dense(diag, features @ params.C.T + params.d)
    shifted = rng.standard_normal((features.shape[0], params.n))
    if params.E is not None:
        shifted = shifted + features @ params.E.T + params.f
    return batch_solve_lower(factors, shifted, transpose=True)


def sample_planted(params: RegressionParams, size: int, seed: int = 0) -> Dataset:
    """Sample a timestamped dataset with uniform features from a planted whitener.

    Args:
        params: the planted parameters.
        size: the number of samples.
        seed: the random seed.

    Returns:
        the samples.
    """
    rng = np.random.default_rng(seed)
    features = rng.uniform(-1.0, 1.0, size=(size, params.p))
    outcomes = sample_outcomes(params, features, rng)
    return Dataset(features, outcomes, np.arange(size, dtype=np.float64))


def heteroscedastic_frame(size: int = 2000, seed: int = 0) -> pd.DataFrame:
    """Build a raw table from the planted whitener, with the feature on its own scale.

    The "signal" column is 50 + 20·x, so a minmax transform recovers x up to the
    sampled range.

    Args:
        size: the number of rows.
        seed: the random seed.

    Returns:
        a table with columns t, signal, y1 and y2.
    """
    data = sample_planted(PLANTED, size, seed)
    return pd.DataFrame(
        {
            "t": np.arange(size),
            "signal": SIGNAL_CENTER + SIGNAL_SCALE * data.features[:, 0],
            "y1": data.outcomes[:, 0],
            "y2": data.outcomes[:, 1],
        }
    )


def heteroscedastic_recipe(kind: str = "regression") -> dict[str, Any]:
    """Build the recipe matching heteroscedastic_frame.

    Args:
        kind: the single stage to fit.

    Returns:
        the recipe document.
    """
    stage: dict[str, Any] = {"kind": kind}
    if kind == "sma":
        stage["memory"] = 20
    elif kind == "ewma":
        stage["half_life"] = 20.0
    return {
        "version": 1,
        "index": "t",
        "outcomes": ["y1", "y2"],
        "features": [{"column": "signal", "transform": "minmax"}],
        "split": {"fraction": 0.8},
        "stages": [stage],
    }
