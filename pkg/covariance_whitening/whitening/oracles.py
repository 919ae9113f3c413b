# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Brute-force checks of the numerical core against independent computations."""

import itertools
import logging
from typing import Callable, NamedTuple

import numpy as np
from opentelemetry import trace

from .linalg import LowerTriangular, covariance_from_whitener, packed_size, precision_factor
from .objective import (
    LOG_2PI,
    FitConfig,
    RegressionParams,
    check_feasible,
    loglik_terms,
    value_and_gradient,
)
from .solver import fit_regression
from .synthetic import sample_planted
from .whiteners import Dataset, ExponentialStage, MovingAverageStage

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

FD_STEP = 1e-6
FD_TOLERANCE = 1e-5
GRID_SIZE = 400


class OracleOutcome(NamedTuple):
    """Outcome of one suite.

    Attributes:
        name: the suite name.
        passed: whether every case passed.
        detail: a one-line summary.
    """

    name: str
    passed: bool
    detail: str


def random_feasible(
    rng: np.random.Generator, n: int, p: int, epsilon: float = 1e-6, with_mean: bool = False
) -> RegressionParams:
    """Draw parameters well inside the feasible set.

    Args:
        rng: the random generator.
        n: outcome dimension.
        p: feature dimension.
        epsilon: the diagonal floor.
        with_mean: whether to draw mean blocks.

    Returns:
        parameters with a diagonal margin of at least 0.5 over the box.
    """
    k = packed_size(n)
    a_matrix = rng.normal(scale=0.3, size=(n, p))
    b = np.abs(a_matrix).sum(axis=1) + epsilon + 0.5 + rng.uniform(size=n)
    return RegressionParams(
        A=a_matrix,
        b=b,
        C=rng.normal(scale=0.3, size=(k, p)),
        d=rng.normal(scale=0.3, size=k),
        E=rng.normal(size=(n, p)) if with_mean else None,
        f=rng.normal(size=n) if with_mean else None,
    )


def _random_data(rng: np.random.Generator, size: int, n: int, p: int) -> Dataset:
    return Dataset(rng.uniform(-1, 1, size=(size, p)), rng.normal(size=(size, n)))


@tracer.start_as_current_span("check_gradient")
def check_gradient(seed: int = 0, points: int = 200) -> OracleOutcome:
    """Compare the analytic gradient with central differences at random feasible points.

    Args:
        seed: the random seed.
        points: the number of points.

    Returns:
        the outcome; errors are relative to max(1, |g|).
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for point in range(points):
        n, p = (1, 2, 4)[point % 3], (0, 1, 3)[(point // 3) % 3]
        with_mean = point % 2 == 1
        params = random_feasible(rng, n, p, with_mean=with_mean)
        data = _random_data(rng, 10, n, p)
        cfg = FitConfig(lambda1=0.1, lambda2=0.2, lambda_mean=0.05, trace_weight=0.03)
        _, grad = value_and_gradient(params, data, cfg)
        analytic = grad.flatten()
        base = params.flatten()
        for index in range(base.size):
            step = np.zeros_like(base)
            step[index] = FD_STEP
            up = RegressionParams.unflatten(base + step, n, p, with_mean)
            down = RegressionParams.unflatten(base - step, n, p, with_mean)
            numeric = (
                value_and_gradient(up, data, cfg)[0] - value_and_gradient(down, data, cfg)[0]
            ) / (2 * FD_STEP)
            error = abs(numeric - analytic[index]) / max(1.0, abs(analytic[index]))
            worst = max(worst, error)
    return OracleOutcome("gradient", worst <= FD_TOLERANCE, f"max relative error {worst:.2e}")


def _grid_objective(
    features: np.ndarray, outcomes: np.ndarray, slopes: np.ndarray, offsets: np.ndarray
) -> np.ndarray:
    """Mean log-likelihood of n = p = 1 whiteners over a grid of (A, b)."""
    diag = slopes[:, None] * features[None, :] + offsets[:, None]
    return np.mean(np.log(diag) - 0.5 * (diag * outcomes[None, :]) ** 2, axis=1) - LOG_2PI / 2


@tracer.start_as_current_span("check_grid")
def check_grid(seed: int = 0) -> OracleOutcome:
    """Compare the fitted objective with the best point of a dense feasible grid.

    Args:
        seed: the random seed.

    Returns:
        the outcome.
    """
    planted = RegressionParams(A=[[0.5]], b=[1.0], C=np.zeros((0, 1)), d=[])
    data = sample_planted(planted, 50, seed)
    cfg = FitConfig()
    fitted = fit_regression(data, cfg).params
    solver_value = value_and_gradient(fitted, data, cfg)[0]
    offsets = np.linspace(cfg.epsilon, 4.0, GRID_SIZE)
    slopes = np.linspace(-4.0, 4.0, GRID_SIZE)
    slope_grid, offset_grid = (grid.reshape(-1) for grid in np.meshgrid(slopes, offsets))
    feasible = np.abs(slope_grid) + cfg.epsilon <= offset_grid
    values = _grid_objective(
        data.features[:, 0], data.outcomes[:, 0], slope_grid[feasible], offset_grid[feasible]
    )
    best = float(values.max())
    return OracleOutcome(
        "grid",
        solver_value >= best - 1e-6,
        f"solver {solver_value:.8f}, grid best {best:.8f}",
    )


@tracer.start_as_current_span("check_concavity")
def check_concavity(seed: int = 0, pairs: int = 500) -> OracleOutcome:
    """Check midpoint concavity of the unregularized objective on random feasible pairs.

    Args:
        seed: the random seed.
        pairs: the number of pairs.

    Returns:
        the outcome.
    """
    rng = np.random.default_rng(seed)
    worst = np.inf
    for pair in range(pairs):
        n, p = 1 + pair % 3, pair % 4
        with_mean = pair % 2 == 0
        data = _random_data(rng, 20, n, p)
        first = random_feasible(rng, n, p, with_mean=with_mean)
        second = random_feasible(rng, n, p, with_mean=with_mean)
        middle = RegressionParams.unflatten(
            (first.flatten() + second.flatten()) / 2, n, p, with_mean
        )
        value, left, right = (
            float(np.mean(loglik_terms(params, data.features, data.outcomes)))
            for params in (middle, first, second)
        )
        worst = min(worst, value - (left + right) / 2)
    return OracleOutcome("concavity", worst >= -1e-9, f"min midpoint gap {worst:.2e}")


def _random_factor(rng: np.random.Generator, n: int) -> LowerTriangular:
    return LowerTriangular(rng.uniform(0.5, 2.0, size=n), rng.uniform(-0.5, 0.5, packed_size(n)))


@tracer.start_as_current_span("check_round_trip")
def check_round_trip(seed: int = 0, cases: int = 100) -> OracleOutcome:
    """Recover random whiteners from the covariances they predict.

    Args:
        seed: the random seed.
        cases: the number of whiteners.

    Returns:
        the outcome.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for case in range(cases):
        factor = _random_factor(rng, 1 + case % 6)
        recovered = precision_factor(covariance_from_whitener(factor))
        worst = max(worst, float(np.max(np.abs(recovered.dense() - factor.dense()))))
    return OracleOutcome("round_trip", worst <= 1e-8, f"max entry error {worst:.2e}")


@tracer.start_as_current_span("check_recursions")
def check_recursions(seed: int = 0, steps: int = 500) -> OracleOutcome:
    """Compare rolling second moments with direct summation.

    Args:
        seed: the random seed.
        steps: the sequence length.

    Returns:
        the outcome.
    """
    rng = np.random.default_rng(seed)
    outcomes = rng.normal(size=(steps, 2))
    stages = [MovingAverageStage(2, memory) for memory in (2, 5, 50)] + [
        ExponentialStage(2, half_life) for half_life in (1.0, 10.0, 63.0)
    ]
    worst = 0.0
    for stage in stages:
        rolling = stage.rolling_second_moments(outcomes)
        for offset, moment in enumerate(rolling):
            direct = stage.second_moment(outcomes[: stage.warmup + offset])
            error = np.linalg.norm(moment - direct) / np.linalg.norm(direct)
            worst = max(worst, float(error))
    return OracleOutcome("recursion", worst <= 1e-10, f"max relative error {worst:.2e}")


@tracer.start_as_current_span("check_feasibility_corners")
def check_feasibility_corners(seed: int = 0, cases: int = 200) -> OracleOutcome:
    """Compare the row-norm feasibility test with enumeration of the box corners.

    Args:
        seed: the random seed.
        cases: the number of parameter draws.

    Returns:
        the outcome.
    """
    rng = np.random.default_rng(seed)
    epsilon = 1e-6
    mismatches = 0
    for case in range(cases):
        n, p = 1 + case % 3, 1 + case % 10
        a_matrix = rng.normal(size=(n, p))
        margin = rng.uniform(1e-3, 0.5, size=n) * rng.choice([-1.0, 1.0], size=n)
        k = packed_size(n)
        params = RegressionParams(
            A=a_matrix,
            b=np.abs(a_matrix).sum(axis=1) + epsilon + margin,
            C=np.zeros((k, p)),
            d=np.zeros(k),
        )
        corners = np.array(list(itertools.product((-1.0, 1.0), repeat=p)))
        lowest = (corners @ params.A.T + params.b).min()
        if check_feasible(params, epsilon).feasible != bool(lowest >= epsilon):
            mismatches += 1
    return OracleOutcome("feasibility", mismatches == 0, f"{mismatches} of {cases} disagree")


SUITES: dict[str, Callable[[int], OracleOutcome]] = {
    "gradient": check_gradient,
    "grid": check_grid,
    "concavity": check_concavity,
    "round_trip": check_round_trip,
    "recursion": check_recursions,
    "feasibility": check_feasibility_corners,
}


def run_all(seed: int = 0, names: list[str] | None = None) -> list[OracleOutcome]:
    """Run the suites.

    Args:
        seed: the random seed.
        names: the suites to run, all by default.

    Returns:
        the outcomes, in suite order.
    """
    outcomes = []
    for name, suite in SUITES.items():
        if names and name not in names:
            continue
        outcome = suite(seed)
        status = "pass" if outcome.passed else "FAIL"
        logger.info("Suite %s: %s (%s)", name, status, outcome.detail)
        outcomes.append(outcome)
    return outcomes
