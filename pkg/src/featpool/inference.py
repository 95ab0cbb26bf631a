"""MAP estimation of pool coefficients and indicator-based feature selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConvergenceError, NonFiniteScore
from .pool import LogPosterior, PriorConfig


@dataclass(frozen=True)
class InferenceConfig:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    restarts: int = 2
    draws: int = 100
    burn_in: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.restarts < 0 or self.burn_in < 0:
            raise ValueError("restarts and burn_in must be >= 0")
        if self.draws < 1:
            raise ValueError("draws (L) must be >= 1")


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    converged: bool
    iterations: int
    trace: list = field(default_factory=list)
    message: str = ""


def bfgs_maximize(
    fun: Callable,
    x0: np.ndarray,
    max_iterations: int = 500,
    gradient_tolerance: float = 1e-6,
    c1: float = 1e-4,
    max_halvings: int = 60,
) -> OptimizeResult:
    """Maximize ``fun`` (returning ``(value, gradient)``) by BFGS with Armijo backtracking.

    ``trace`` lists the objective after every accepted step, starting with the
    value at ``x0``; it is nondecreasing by construction.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteScore("objective is not finite at the starting point")
    n = x.size
    H = np.eye(n)
    trace = [f]
    if n == 0:
        return OptimizeResult(x, f, True, 0, trace, "no free parameters")
    first = True
    for it in range(1, max_iterations + 1):
        gmax = float(np.max(np.abs(g)))
        if gmax < gradient_tolerance:
            return OptimizeResult(x, f, True, it - 1, trace, "gradient tolerance reached")
        p = H @ g
        slope = float(g @ p)
        if slope <= 0:
            # lost ascent direction: fall back to steepest ascent
            H = np.eye(n)
            p = g.copy()
            slope = float(g @ g)
        step = min(1.0, 1.0 / gmax) if first else 1.0
        for _ in range(max_halvings):
            x_new = x + step * p
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and f_new >= f + c1 * step * slope:
                break
            step *= 0.5
        else:
            return OptimizeResult(x, f, gmax < 1e3 * gradient_tolerance, it - 1, trace,
                                  "line search failed")
        s = x_new - x
        yv = g - g_new  # gradient of the minimized objective is -g
        sy = float(s @ yv)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(yv)) and sy > 0:
            if first:
                H = np.eye(n) * (sy / float(yv @ yv))
            rho = 1.0 / sy
            Hy = H @ yv
            H = H + (rho * rho * float(yv @ Hy) + rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        first = False
        x, f, g = x_new, f_new, g_new
        trace.append(f)
    converged = float(np.max(np.abs(g))) < gradient_tolerance
    return OptimizeResult(x, f, converged, max_iterations, trace, "iteration limit")


@dataclass
class MapResult:
    beta: np.ndarray
    value: float
    converged: bool
    runs: list = field(default_factory=list)


def map_estimate(
    log_densities,
    features,
    prior: PriorConfig,
    selection=None,
    config: InferenceConfig = InferenceConfig(),
    init: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None,
    restarts: Optional[int] = None,
) -> MapResult:
    """Maximum-a-posteriori coefficients.

    Runs BFGS from ``init`` (if given, masked to the selection), from zero and
    from ``restarts`` seeded N(0, 0.1^2) starts; returns the best optimum.
    """
    post = LogPosterior(log_densities, features, prior, selection)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n_restarts = config.restarts if restarts is None else restarts
    starts = []
    if init is not None:
        starts.append(post.flatten(init))
    starts.append(np.zeros(post.size))
    starts.extend(rng.normal(0.0, 0.1, size=post.size) for _ in range(n_restarts))

    runs = []
    for x0 in starts:
        try:
            res = bfgs_maximize(post.value_and_grad, x0, config.max_iterations, config.gradient_tolerance)
        except NonFiniteScore:
            continue
        runs.append(res)
    if not runs:
        raise ConvergenceError("every MAP start produced a non-finite objective")
    best = max(runs, key=lambda r: r.value)
    return MapResult(post.unflatten(best.x), best.value, best.converged, runs)


# ----------------------------------------------------------------------------
# variable selection
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorDraw:
    selection: np.ndarray
    beta: np.ndarray
    log_posterior_value: float


def acceptance_probability(current_value: float, proposal_value: float) -> float:
    delta = proposal_value - current_value
    return 1.0 if delta >= 0 else math.exp(delta)


def metropolis_accept(current: PosteriorDraw, proposal: PosteriorDraw, uniform_draw: float) -> bool:
    if not (np.isfinite(current.log_posterior_value) and np.isfinite(proposal.log_posterior_value)):
        raise NonFiniteScore("Metropolis step needs finite log posterior values")
    return uniform_draw < acceptance_probability(current.log_posterior_value, proposal.log_posterior_value)


@dataclass
class GibbsResult:
    draws: list
    proposals: int
    accepted: int
    failed: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else float("nan")

    def __iter__(self):
        return iter(self.draws)

    def __len__(self) -> int:
        return len(self.draws)


def gibbs_select(
    log_densities,
    features,
    prior: PriorConfig,
    config: InferenceConfig = InferenceConfig(),
    initial_selection: Optional[np.ndarray] = None,
) -> GibbsResult:
    """Metropolis-within-Gibbs over feature indicators with conditional MAP coefficients.

    Each sweep visits the model rows in order; for each row one uniformly chosen
    indicator is flipped, the coefficients are re-optimized under the proposed
    selection, and the proposal is accepted with the Metropolis rule on the
    joint log posterior (indicator prior included). ``burn_in`` sweeps are
    discarded, then one draw is kept per sweep until ``draws`` are collected.
    """
    logp = getattr(log_densities, "log_densities", log_densities)
    X = np.asarray(getattr(features, "values", features), dtype=float)
    m = np.shape(logp)[1]
    n = X.shape[1]
    if n < 1:
        raise ValueError("variable selection needs at least one feature")
    rng = np.random.default_rng(config.seed)
    sel = np.ones((m - 1, n), dtype=int) if initial_selection is None else np.array(initial_selection, dtype=int)
    fit = map_estimate(logp, X, prior, sel, config, rng=rng)
    current = PosteriorDraw(sel.copy(), fit.beta, fit.value)

    draws, proposals, accepted, failed = [], 0, 0, 0
    for sweep in range(config.burn_in + config.draws):
        for i in range(m - 1):
            j = int(rng.integers(n))
            prop_sel = current.selection.copy()
            prop_sel[i, j] = 1 - prop_sel[i, j]
            u = float(rng.random())
            proposals += 1
            try:
                pfit = map_estimate(logp, X, prior, prop_sel, config, init=current.beta, rng=rng)
            except (ConvergenceError, NonFiniteScore):
                failed += 1
                continue
            proposal = PosteriorDraw(prop_sel, pfit.beta, pfit.value)
            if metropolis_accept(current, proposal, u):
                current = proposal
                accepted += 1
        if sweep >= config.burn_in:
            draws.append(current)
    return GibbsResult(draws, proposals, accepted, failed)


def selection_frequencies(draws: Sequence[PosteriorDraw]) -> np.ndarray:
    draws = list(draws)
    if not draws:
        raise ValueError("no draws")
    return np.mean([d.selection for d in draws], axis=0)
