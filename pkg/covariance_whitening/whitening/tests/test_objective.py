# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Unit tests for the objective module."""

import math

import numpy as np
import pytest

from whitening import objective as objective_module
from whitening.exceptions import DimensionMismatch, InvalidConfig, NonPositiveDiagonal
from whitening.objective import (
    LOG_2PI,
    FitConfig,
    RegressionParams,
    check_feasible,
    gradient,
    loglik_terms,
    objective,
    ridge_penalty,
    sample_loglik,
    value_and_gradient,
)
from whitening.synthetic import PLANTED, PLANTED_MEAN
from whitening.whiteners import Dataset


def _data(rng: np.random.Generator, size: int, n: int, p: int) -> Dataset:
    return Dataset(rng.uniform(-1, 1, size=(size, p)), rng.normal(size=(size, n)))


def test_identity_objective(rng: np.random.Generator):
    """
    arrange: given the identity parameters and random samples.
    act: compute the objective.
    assert: it is the mean standard normal log-density.
    """
    data = _data(rng, 30, 3, 2)

    value = objective(RegressionParams.identity(3, 2), data, FitConfig())

    expected = np.mean(-1.5 * LOG_2PI - 0.5 * np.sum(data.outcomes**2, axis=1))
    assert value == pytest.approx(expected, abs=1e-12)


def test_objective_matches_sample_sum(rng: np.random.Generator):
    """
    arrange: given joint parameters, a ridge and random samples.
    act: compute the objective.
    assert: it is the mean per-sample log-likelihood minus the ridge penalty.
    """
    data = _data(rng, 25, 2, 1)
    cfg = FitConfig(lambda1=0.3, lambda2=0.2, lambda_mean=0.1)

    value = objective(PLANTED_MEAN, data, cfg)

    samples = [sample_loglik(PLANTED_MEAN, x, y) for x, y in zip(data.features, data.outcomes)]
    np.testing.assert_allclose(
        loglik_terms(PLANTED_MEAN, data.features, data.outcomes), samples, atol=1e-12
    )
    assert value == pytest.approx(np.mean(samples) - ridge_penalty(PLANTED_MEAN, cfg), abs=1e-12)


def test_trace_regularizer(rng: np.random.Generator):
    """
    arrange: given parameters and a trace weight.
    act: compute the objective with and without the trace weight.
    assert: the difference is the weighted mean squared Frobenius norm of L(x).
    """
    data = _data(rng, 12, 2, 1)

    plain = objective(PLANTED, data, FitConfig())
    weighted = objective(PLANTED, data, FitConfig(trace_weight=0.5))

    norms = [np.sum(PLANTED.whitener(x).dense() ** 2) for x in data.features]
    assert plain - weighted == pytest.approx(0.5 * np.mean(norms), abs=1e-12)


@pytest.mark.parametrize(
    "with_mean", [pytest.param(False, id="plain"), pytest.param(True, id="joint")]
)
def test_gradient_matches_finite_differences(rng: np.random.Generator, with_mean: bool):
    """
    arrange: given feasible parameters and random samples.
    act: compute the analytic gradient.
    assert: it matches central differences.
    """
    params = PLANTED_MEAN if with_mean else PLANTED
    data = _data(rng, 40, 2, 1)
    cfg = FitConfig(lambda1=0.1, lambda2=0.05, lambda_mean=0.2, trace_weight=0.02)

    analytic = gradient(params, data, cfg).flatten()

    base = params.flatten()
    step = 1e-6
    for index in range(base.size):
        shift = np.zeros_like(base)
        shift[index] = step
        up = RegressionParams.unflatten(base + shift, 2, 1, with_mean)
        down = RegressionParams.unflatten(base - shift, 2, 1, with_mean)
        numeric = (objective(up, data, cfg) - objective(down, data, cfg)) / (2 * step)
        assert numeric == pytest.approx(analytic[index], abs=1e-5)


def test_non_positive_diagonal():
    """
    arrange: given parameters whose diagonal is negative on the data.
    act: compute the objective in strict and lenient mode.
    assert: strict mode raises and lenient mode returns minus infinity.
    """
    params = RegressionParams(A=[[-3.0]], b=[1.0], C=np.zeros((0, 1)), d=[])
    data = Dataset([[0.9]], [[1.0]])

    with pytest.raises(NonPositiveDiagonal):
        value_and_gradient(params, data, FitConfig())
    value, grad = value_and_gradient(params, data, FitConfig(), strict=False)

    assert value == -math.inf
    assert not np.any(grad.flatten())


def test_threads_do_not_change_result(rng: np.random.Generator, monkeypatch: pytest.MonkeyPatch):
    """
    arrange: given a small block size so the samples span several blocks.
    act: compute the objective with one and with four threads.
    assert: the values and gradients are bit-identical.
    """
    monkeypatch.setattr(objective_module.settings, "CHUNK_ROWS", 7)
    data = _data(rng, 50, 2, 1)

    single = value_and_gradient(PLANTED, data, FitConfig(threads=1))
    multi = value_and_gradient(PLANTED, data, FitConfig(threads=4))

    assert single[0] == multi[0]
    np.testing.assert_array_equal(single[1].flatten(), multi[1].flatten())


def test_check_feasible():
    """
    arrange: given parameters with one row on the boundary and one row outside.
    act: check feasibility.
    assert: the report names the violating row and its margin.
    """
    params = RegressionParams(
        A=[[0.5, -0.5], [1.0, 1.0]], b=[1.0 + 1e-6, 1.5], C=np.zeros((1, 2)), d=[0.0]
    )

    report = check_feasible(params, 1e-6)

    assert not report.feasible
    assert report.row == 1
    assert report.margin == pytest.approx(-0.5 - 1e-6)
    assert check_feasible(RegressionParams.identity(2, 2), 1e-6).feasible


def test_flatten_round_trip():
    """
    arrange: given joint parameters.
    act: flatten and unflatten them, and unflatten a vector of the wrong size.
    assert: the blocks are restored and the wrong size is rejected.
    """
    vector = PLANTED_MEAN.flatten()

    restored = RegressionParams.unflatten(vector, 2, 1, with_mean=True)

    assert PLANTED_MEAN.parameter_count == 2 + 2 + 1 + 1 + 2 + 2
    for restored_block, block in zip(restored.blocks(), PLANTED_MEAN.blocks()):
        np.testing.assert_array_equal(restored_block, block)
    with pytest.raises(DimensionMismatch):
        RegressionParams.unflatten(vector[:-1], 2, 1, with_mean=True)


def test_params_validation():
    """
    arrange: do nothing.
    act: build parameters with mismatched blocks and with E but no f.
    assert: DimensionMismatch is raised.
    """
    with pytest.raises(DimensionMismatch):
        RegressionParams(A=np.zeros((2, 1)), b=np.ones(2), C=np.zeros((2, 1)), d=np.zeros(1))
    with pytest.raises(DimensionMismatch):
        RegressionParams(
            A=np.zeros((2, 1)),
            b=np.ones(2),
            C=np.zeros((1, 1)),
            d=np.zeros(1),
            E=np.zeros((2, 1)),
        )


@pytest.mark.parametrize(
    "overrides",
    [
        pytest.param({"epsilon": 0.0}, id="epsilon"),
        pytest.param({"lambda1": -1.0}, id="lambda1"),
        pytest.param({"trace_weight": -0.1}, id="trace_weight"),
        pytest.param({"max_iters": 0}, id="max_iters"),
        pytest.param({"threads": 0}, id="threads"),
    ],
)
def test_fit_config_validation(overrides: dict):
    """
    arrange: do nothing.
    act: build a fit configuration with an out-of-range setting.
    assert: InvalidConfig is raised.
    """
    with pytest.raises(InvalidConfig):
        FitConfig(**overrides)
