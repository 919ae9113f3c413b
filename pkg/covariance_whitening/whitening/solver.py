# Copyright 2025 Canonical Ltd.
# See LICENSE file for licensing details.
"""Box-constrained limited-memory quasi-Newton solver and the stage fitters built on it."""

import dataclasses
import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from opentelemetry import trace

from .exceptions import RecipeError, SingularCovariance, SolverFailure
from .objective import FitConfig, RegressionParams, check_feasible, value_and_gradient
from .whiteners import (
    STAGE_KINDS,
    Dataset,
    DiagonalStage,
    Pipeline,
    RegressionStage,
    WhitenerStage,
    fit_constant,
    fit_ewma,
    fit_permutation,
    fit_sma,
    lift,
    score,
    whiten_dataset,
)

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

# Curvature pairs with sᵀy at or below this are not stored.
CURVATURE_FLOOR = 1e-12
# Loose tolerance factor accepted when the solver stops early.
LOOSE_TOLERANCE_FACTOR = 10.0


class SolverStatus(str, enum.Enum):
    """Final state of a minimization.

    Attrs:
        CONVERGED: the projected gradient fell below the tolerance.
        MAX_ITERS: the iteration limit was reached.
        LINE_SEARCH_FAILURE: no step along the search direction decreased the objective.
    """

    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    LINE_SEARCH_FAILURE = "LineSearchFailure"


Evaluate = Callable[[NDArray[np.float64]], tuple[float, NDArray[np.float64]]]


@dataclass(frozen=True)
class BoxProblem:
    """Smooth minimization over a box.

    Attributes:
        dim: number of variables.
        lower: lower bounds, −inf allowed.
        upper: upper bounds, +inf allowed.
        evaluate: returns the value to minimize and its gradient.
    """

    dim: int
    lower: NDArray[np.float64]
    upper: NDArray[np.float64]
    evaluate: Evaluate

    def __post_init__(self) -> None:
        """Check the bounds.

        Raises:
            ValueError: if the bounds have the wrong length or cross.
        """
        if self.lower.shape != (self.dim,) or self.upper.shape != (self.dim,):
            raise ValueError(f"Bounds must have length {self.dim}")
        if np.any(self.lower > self.upper):
            raise ValueError("Lower bounds must not exceed upper bounds")

    @classmethod
    def unbounded(cls, dim: int, evaluate: Evaluate) -> "BoxProblem":
        """Build a problem without bounds."""
        return cls(dim, np.full(dim, -np.inf), np.full(dim, np.inf), evaluate)

    def project(self, point: NDArray[np.float64]) -> NDArray[np.float64]:
        """Clip a point onto the box."""
        return np.clip(point, self.lower, self.upper)

    def projected_gradient_norm(
        self, point: NDArray[np.float64], grad: NDArray[np.float64]
    ) -> float:
        """Get the ∞-norm of the projected gradient step x − P(x − g)."""
        if self.dim == 0:
            return 0.0
        return float(np.max(np.abs(point - self.project(point - grad))))


@dataclass(frozen=True)
class SolverOptions:
    """Settings of a minimization.

    Attributes:
        memory: number of stored curvature pairs.
        max_iters: iteration limit.
        grad_tol: projected-gradient tolerance.
        c1: sufficient decrease constant.
        c2: curvature constant.
        max_backtracks: step halvings before the line search gives up.
    """

    memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-7
    c1: float = 1e-4
    c2: float = 0.9
    max_backtracks: int = 60

    @classmethod
    def from_config(cls, cfg: FitConfig) -> "SolverOptions":
        """Take the solver settings of a fit configuration."""
        return cls(memory=cfg.lbfgs_memory, max_iters=cfg.max_iters, grad_tol=cfg.grad_tolerance)


@dataclass(frozen=True)
class SolverResult:
    """Outcome of a minimization.

    Attributes:
        solution: the final point, inside the box.
        value: the value at the final point.
        iterations: the number of accepted steps.
        status: the final status.
        history: the value after every accepted step, starting value first.
        projected_gradient_norm: the final projected-gradient ∞-norm.
        restarts: how many times the curvature memory was dropped after a failed
            quasi-Newton line search.
    """

    solution: NDArray[np.float64]
    value: float
    iterations: int
    status: SolverStatus
    history: list[float] = field(default_factory=list)
    projected_gradient_norm: float = math.inf
    restarts: int = 0


def _two_loop(
    grad: NDArray[np.float64],
    pairs: Sequence[tuple[NDArray[np.float64], NDArray[np.float64]]],
    free: NDArray[np.bool_],
) -> NDArray[np.float64]:
    """Apply the limited-memory inverse Hessian to the gradient on the free variables.

    Args:
        grad: the gradient.
        pairs: the curvature pairs (s, y), oldest first.
        free: the variables not held at a bound.

    Returns:
        the search direction, zero on the held variables.
    """
    q = grad[free].copy()
    used = []
    for s, y in reversed(pairs):
        s_free, y_free = s[free], y[free]
        curvature = float(s_free @ y_free)
        if curvature <= CURVATURE_FLOOR:
            continue
        rho = 1.0 / curvature
        alpha = rho * float(s_free @ q)
        q -= alpha * y_free
        used.append((s_free, y_free, rho, alpha))
    if used:
        s_free, y_free, _, _ = used[0]
        q *= float(s_free @ y_free) / float(y_free @ y_free)
    for s_free, y_free, rho, alpha in reversed(used):
        beta = rho * float(y_free @ q)
        q += (alpha - beta) * s_free
    direction = np.zeros_like(grad)
    direction[free] = -q
    return direction


def _line_search(
    problem: BoxProblem,
    point: NDArray[np.float64],
    value: float,
    grad: NDArray[np.float64],
    direction: NDArray[np.float64],
    step: float,
    opts: SolverOptions,
) -> tuple[NDArray[np.float64], float, NDArray[np.float64]] | None:
    """Search along the projected path P(x + t·d) for a sufficient decrease.

    Steps on an unclipped path that satisfy the decrease but not the curvature condition
    are lengthened; otherwise the step is halved.

    Returns:
        the new point, value and gradient, or None if no step decreases the value.
    """
    accepted = None
    expanding = False
    for _ in range(opts.max_backtracks):
        candidate = problem.project(point + step * direction)
        move = candidate - point
        decrease = float(grad @ move)
        if decrease < 0:
            new_value, new_grad = problem.evaluate(candidate)
            if math.isfinite(new_value) and new_value <= value + opts.c1 * decrease:
                accepted = (candidate, new_value, new_grad)
                clipped = not np.array_equal(candidate, point + step * direction)
                if clipped or float(new_grad @ move) >= opts.c2 * decrease:
                    return accepted
                expanding = True
                step *= 2.0
                continue
        if expanding:
            return accepted
        step /= 2.0
    return accepted


@tracer.start_as_current_span("minimize")
def minimize(problem: BoxProblem, start: ArrayLike, opts: SolverOptions) -> SolverResult:
    """Minimize a smooth function over a box by projected L-BFGS.

    Args:
        problem: the problem.
        start: the starting point, projected onto the box.
        opts: the solver settings.

    Returns:
        the result; the solution always lies inside the box.
    """
    point = problem.project(np.array(start, dtype=np.float64))
    value, grad = problem.evaluate(point)
    pairs: deque = deque(maxlen=opts.memory)
    history = [value]
    status = SolverStatus.MAX_ITERS
    iterations = restarts = 0
    norm = problem.projected_gradient_norm(point, grad)
    for iterations in range(opts.max_iters + 1):
        if norm <= opts.grad_tol:
            status = SolverStatus.CONVERGED
            break
        if iterations == opts.max_iters:
            break
        held = ((point <= problem.lower) & (grad > 0)) | ((point >= problem.upper) & (grad < 0))
        free = ~held
        direction = _two_loop(grad, list(pairs), free)
        steepest = not pairs or float(grad @ direction) >= 0
        if steepest:
            direction = np.where(free, -grad, 0.0)
        first_step = 1.0 if not steepest else min(1.0, 1.0 / max(np.max(np.abs(grad)), 1e-300))
        found = _line_search(problem, point, value, grad, direction, first_step, opts)
        if found is None and not steepest:
            logger.warning(
                "Line search failed along the quasi-Newton direction at iteration %d, "
                "restarting from steepest descent",
                iterations,
            )
            restarts += 1
            pairs.clear()
            direction = np.where(free, -grad, 0.0)
            first_step = min(1.0, 1.0 / max(np.max(np.abs(grad)), 1e-300))
            found = _line_search(problem, point, value, grad, direction, first_step, opts)
        if found is None:
            status = SolverStatus.LINE_SEARCH_FAILURE
            break
        new_point, new_value, new_grad = found
        s, y = new_point - point, new_grad - grad
        if float(s @ y) > CURVATURE_FLOOR:
            pairs.append((s, y))
        point, value, grad = new_point, new_value, new_grad
        history.append(value)
        norm = problem.projected_gradient_norm(point, grad)
        logger.debug("Iteration %d: value %.12g, projected gradient %.3g", iterations, value, norm)
    return SolverResult(point, value, iterations, status, history, norm, restarts)


class SplitEncoding:
    """Flat layout (A₊, A₋, b₊, C, d [, E, f]) with A = A₊ − A₋ and b = (A₊ + A₋)·1 + ε + b₊.

    Nonnegative A₊, A₋ and b₊ keep every decoded point feasible.
    """

    def __init__(self, n: int, p: int, epsilon: float, with_mean: bool = False):
        """Initialize the layout.

        Args:
            n: outcome dimension.
            p: feature dimension.
            epsilon: the diagonal floor.
            with_mean: whether to carry the mean blocks.
        """
        self.n, self.p, self.epsilon, self.with_mean = n, p, epsilon, with_mean
        self.k = n * (n - 1) // 2
        sizes = [n * p, n * p, n, self.k * p, self.k] + ([n * p, n] if with_mean else [])
        self.splits = np.cumsum(sizes)[:-1]
        self.dim = int(sum(sizes))
        self.bounded = 2 * n * p + n

    def bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Get the box: nonnegative split variables, free otherwise."""
        lower = np.full(self.dim, -np.inf)
        lower[: self.bounded] = 0.0
        return lower, np.full(self.dim, np.inf)

    def start(self) -> NDArray[np.float64]:
        """Get the identity whitener: A₊ = A₋ = 0, b₊ = 1 − ε, C = d = 0."""
        vector = np.zeros(self.dim)
        vector[2 * self.n * self.p : self.bounded] = max(1.0 - self.epsilon, 0.0)
        return vector

    def decode(self, vector: NDArray[np.float64]) -> RegressionParams:
        """Recover the regression parameters."""
        parts = np.split(vector, self.splits)
        a_plus, a_minus = (part.reshape(self.n, self.p) for part in parts[:2])
        b = ((a_plus + a_minus).sum(axis=1) + self.epsilon) + parts[2]
        mean = (parts[5].reshape(self.n, self.p), parts[6]) if self.with_mean else (None, None)
        return RegressionParams(
            a_plus - a_minus, b, parts[3].reshape(self.k, self.p), parts[4], *mean
        )

    def encode_gradient(self, grad: RegressionParams) -> NDArray[np.float64]:
        """Map a gradient in (A, b, C, d [, E, f]) onto the layout by the chain rule."""
        spread = grad.A + grad.b[:, None]
        blocks = [spread, -grad.A + grad.b[:, None], grad.b] + list(grad.blocks()[2:])
        return np.concatenate([block.reshape(-1) for block in blocks])

    def active_rows(self, vector: NDArray[np.float64]) -> int:
        """Count diagonal constraints held at their bound."""
        return int(np.sum(np.split(vector, self.splits)[2] <= 0.0))


class DirectEncoding:
    """Flat layout (A, b, C, d [, E, f]) without bounds."""

    def __init__(self, n: int, p: int, with_mean: bool = False):
        """Initialize the layout.

        Args:
            n: outcome dimension.
            p: feature dimension.
            with_mean: whether to carry the mean blocks.
        """
        self.n, self.p, self.with_mean = n, p, with_mean
        self.dim = RegressionParams.identity(n, p, with_mean).parameter_count

    def bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Get the unbounded box."""
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)

    def start(self) -> NDArray[np.float64]:
        """Get the identity whitener."""
        return RegressionParams.identity(self.n, self.p, self.with_mean).flatten()

    def decode(self, vector: NDArray[np.float64]) -> RegressionParams:
        """Unflatten the regression parameters."""
        return RegressionParams.unflatten(vector, self.n, self.p, self.with_mean)

    def encode_gradient(self, grad: RegressionParams) -> NDArray[np.float64]:
        """Flatten a gradient."""
        return grad.flatten()


def _regression_problem(
    data: Dataset, cfg: FitConfig, encoding: SplitEncoding | DirectEncoding
) -> BoxProblem:
    """Build the negated objective over an encoding."""

    def evaluate(vector: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        params = encoding.decode(vector)
        value, grad = value_and_gradient(params, data, cfg, strict=False)
        if not math.isfinite(value):
            return math.inf, np.zeros(encoding.dim)
        return -value, -encoding.encode_gradient(grad)

    lower, upper = encoding.bounds()
    return BoxProblem(encoding.dim, lower, upper, evaluate)


def _check_result(result: SolverResult, opts: SolverOptions, what: str) -> None:
    """Accept a converged result or one passing the loose tolerance.

    Raises:
        SolverFailure: otherwise.
    """
    if result.status is SolverStatus.CONVERGED:
        return
    if result.projected_gradient_norm <= LOOSE_TOLERANCE_FACTOR * opts.grad_tol:
        logger.warning(
            "%s fit stopped with %s after %d iterations; projected gradient %.3g accepted",
            what,
            result.status.value,
            result.iterations,
            result.projected_gradient_norm,
        )
        return
    raise SolverFailure(
        f"{what} fit stopped with {result.status.value} after {result.iterations} iterations, "
        f"projected gradient {result.projected_gradient_norm:.3g}",
        status=result.status.value,
    )


def _fit_fast(data: Dataset, cfg: FitConfig, with_mean: bool) -> RegressionParams | None:
    """Solve without the diagonal constraint; None if the result is unusable."""
    encoding = DirectEncoding(data.n, data.p, with_mean)
    opts = SolverOptions.from_config(cfg)
    result = minimize(_regression_problem(data, cfg, encoding), encoding.start(), opts)
    params = encoding.decode(result.solution)
    report = check_feasible(params, cfg.epsilon)
    usable = result.projected_gradient_norm <= LOOSE_TOLERANCE_FACTOR * opts.grad_tol
    if report.feasible and usable:
        return params
    logger.warning(
        "Unconstrained fit is unusable (feasible=%s, margin %.3g at row %d, status %s); "
        "refitting with the constraint",
        report.feasible,
        report.margin,
        report.row,
        result.status.value,
    )
    return None


@tracer.start_as_current_span("fit_regression")
def fit_regression(
    data: Dataset, cfg: FitConfig | None = None, with_mean: bool = False
) -> RegressionStage:
    """Fit a regression whitener by maximizing the regularized training log-likelihood.

    Args:
        data: the training samples.
        cfg: the fit settings.
        with_mean: whether to fit the mean blocks (E, f) jointly.

    Returns:
        the fitted stage, feasible for cfg.epsilon.

    Raises:
        SolverFailure: if the solver stops far from a stationary point.
    """
    cfg = cfg or FitConfig()
    if cfg.fast_unconstrained:
        params = _fit_fast(data, cfg, with_mean)
        if params is not None:
            logger.info("Fitted unconstrained regression stage, n=%d p=%d", data.n, data.p)
            return RegressionStage(params, cfg.epsilon)
    encoding = SplitEncoding(data.n, data.p, cfg.epsilon, with_mean)
    opts = SolverOptions.from_config(cfg)
    result = minimize(_regression_problem(data, cfg, encoding), encoding.start(), opts)
    _check_result(result, opts, "regression")
    params = encoding.decode(result.solution)
    logger.info(
        "Fitted regression stage, n=%d p=%d, %d iterations, objective %.6f, "
        "%d of %d diagonal constraints active",
        data.n,
        data.p,
        result.iterations,
        -result.value,
        encoding.active_rows(result.solution),
        data.n,
    )
    return RegressionStage(params, cfg.epsilon)


def fit_joint(data: Dataset, cfg: FitConfig | None = None) -> RegressionStage:
    """Fit a regression whitener together with the mean offsets ν(x) = Ex + f.

    Args:
        data: the training samples.
        cfg: the fit settings.

    Returns:
        the fitted stage carrying (E, f).
    """
    return fit_regression(data, cfg, with_mean=True)


def _diagonal_row(
    features: NDArray[np.float64], squares: NDArray[np.float64], ridge: float
) -> Evaluate:
    """Build the negated log-likelihood of one diagonal log-variance s = a·x + b."""

    def evaluate(vector: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        coefficients, offset = vector[:-1], vector[-1]
        log_variance = features @ coefficients + offset
        with np.errstate(over="ignore"):
            scaled = squares * np.exp(-log_variance)
        penalty = ridge * float(coefficients @ coefficients)
        value = float(np.mean(-log_variance / 2 - scaled / 2)) - penalty
        if not math.isfinite(value):
            return math.inf, np.zeros_like(vector)
        slope = (scaled - 1) / 2
        grad = np.append(slope @ features / slope.size - 2 * ridge * coefficients, slope.mean())
        return -value, -grad

    return evaluate


@tracer.start_as_current_span("fit_diagonal")
def fit_diagonal(data: Dataset, ridge: float = 0.0, cfg: FitConfig | None = None) -> DiagonalStage:
    """Fit Σ̂(x) = diag(exp(Ax + b)) one outcome at a time.

    Args:
        data: the training samples.
        ridge: ridge weight on A.
        cfg: the solver settings.

    Returns:
        the fitted stage.

    Raises:
        SingularCovariance: if an outcome is identically zero.
    """
    cfg = cfg or FitConfig()
    opts = SolverOptions.from_config(cfg)
    squares = data.outcomes**2
    means = squares.mean(axis=0)
    if np.any(means <= 0):
        raise SingularCovariance("An outcome is identically zero")
    rows = []
    for j in range(data.n):
        evaluate = _diagonal_row(data.features, squares[:, j], ridge)
        problem = BoxProblem.unbounded(data.p + 1, evaluate)
        start = np.append(np.zeros(data.p), math.log(means[j]))
        result = minimize(problem, start, opts)
        _check_result(result, opts, "diagonal")
        rows.append(result.solution)
    solution = np.array(rows)
    logger.info("Fitted diagonal stage, n=%d p=%d", data.n, data.p)
    return DiagonalStage(solution[:, :-1], solution[:, -1])


@dataclass(frozen=True)
class StageSpec:
    """A stage to fit, as declared in a recipe.

    Attributes:
        kind: the stage kind.
        options: kind-specific options.
    """

    kind: str
    options: Mapping[str, Any] = field(default_factory=dict)


CONFIG_OPTIONS = frozenset(f.name for f in dataclasses.fields(FitConfig))


def fit_stage(data: Dataset, spec: StageSpec, cfg: FitConfig | None = None) -> WhitenerStage:
    """Fit one stage on data already whitened by the stages before it.

    Args:
        data: the training samples.
        spec: the stage to fit.
        cfg: base fit settings, overridden by the stage options.

    Returns:
        the fitted stage.

    Raises:
        RecipeError: if the kind is unknown.
    """
    options = dict(spec.options)
    loading = float(options.get("loading", 0.0))
    match spec.kind:
        case "constant":
            return fit_constant(data, loading)
        case "diagonal":
            return fit_diagonal(data, float(options.get("ridge", 0.0)), cfg)
        case "sma":
            return fit_sma(data, int(options["memory"]), loading)
        case "ewma":
            return fit_ewma(data, float(options["half_life"]), loading)
        case "permutation":
            return fit_permutation(options["order"])
        case "regression":
            overrides = {key: value for key, value in options.items() if key in CONFIG_OPTIONS}
            stage_cfg = dataclasses.replace(cfg or FitConfig(), **overrides)
            return fit_regression(data, stage_cfg, with_mean=bool(options.get("mean", False)))
    raise RecipeError(f'"{spec.kind}" is not one of {", ".join(STAGE_KINDS)}', field="kind")


@tracer.start_as_current_span("fit_pipeline")
def fit_pipeline(
    data: Dataset, specs: Sequence[StageSpec], cfg: FitConfig | None = None
) -> Pipeline:
    """Fit stages in order, each on the training data whitened by the ones before.

    Args:
        data: the training samples.
        specs: the stages to fit.
        cfg: base fit settings.

    Returns:
        the fitted pipeline.
    """
    pipeline = Pipeline((), data.n, data.p)
    current = data
    previous = None
    for position, spec in enumerate(specs):
        if position:
            current = whiten_dataset(pipeline, data).whitened
        stage = fit_stage(current, spec, cfg)
        pipeline = pipeline.append(stage)
        fitted = score(pipeline, data)
        logger.info("Stage %d (%s) fitted, training score %.4f", position, spec.kind, fitted)
        if previous is not None:
            logger.info(
                "Stage %d lifts the training likelihood by %.4f", position, lift(fitted, previous)
            )
        previous = fitted
    return pipeline
