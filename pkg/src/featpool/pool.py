"""Feature-driven linear pools.

Weights are a softmax of linear functions of the features, with the last model
as the reference (its linear predictor is fixed at zero)::

    eta_i = x' beta_i            i = 1..m-1,   eta_m = 0
    w_i   = exp(eta_i) / (1 + sum_j exp(eta_j))

``beta`` has shape ``(m - 1, n + 1)``; column 0 is the intercept and ``x``
always carries a leading 1. A selection matrix of shape ``(m - 1, n)`` masks
feature coefficients (the intercept is always active). All mixture algebra is
done in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .errors import NonFiniteScore


@dataclass(frozen=True)
class PriorConfig:
    """Independent N(0, sigma2) coefficients; Bernoulli(p) indicators with p ~ Beta(1, 1)."""

    sigma2: float = 10.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


def logsumexp(a: np.ndarray, axis: int = 1, keepdims: bool = False) -> np.ndarray:
    """Row-wise log-sum-exp; a lean replacement for the scipy routine in hot loops."""
    a = np.asarray(a, dtype=float)
    top = np.max(a, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - top), axis=axis, keepdims=True)) + top
    return out if keepdims else np.squeeze(out, axis=axis)


def coefficient_mask(selection: Optional[np.ndarray], shape: tuple) -> np.ndarray:
    """Boolean mask over ``beta``; the intercept column is always active."""
    mask = np.ones(shape, dtype=bool)
    if selection is not None:
        sel = np.asarray(selection)
        if sel.shape != (shape[0], shape[1] - 1):
            raise ValueError(f"selection shape {sel.shape} does not match beta shape {shape}")
        mask[:, 1:] = sel.astype(bool)
    return mask


def design_matrix(features) -> np.ndarray:
    """Prepend the intercept column to a feature array (or FeatureMatrix)."""
    X = np.asarray(getattr(features, "values", features), dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    return np.column_stack([np.ones(X.shape[0]), X])


def _check(design: np.ndarray, beta: np.ndarray) -> None:
    if beta.ndim != 2 or beta.shape[1] != design.shape[1]:
        raise ValueError(
            f"beta shape {beta.shape} does not match {design.shape[1] - 1} features plus intercept"
        )


def log_weights(design: np.ndarray, beta: np.ndarray, selection=None) -> np.ndarray:
    """Log combination weights, shape ``(T, m)``."""
    design = np.atleast_2d(np.asarray(design, dtype=float))
    beta = np.asarray(beta, dtype=float)
    _check(design, beta)
    eff = beta * coefficient_mask(selection, beta.shape)
    eta = np.zeros((design.shape[0], beta.shape[0] + 1))
    eta[:, :-1] = design @ eff.T
    return eta - logsumexp(eta, axis=1, keepdims=True)


def combination_weights(x, beta, selection=None) -> np.ndarray:
    """Weights for one feature vector ``x`` (leading 1 included) or a design matrix."""
    x = np.asarray(x, dtype=float)
    w = np.exp(log_weights(np.atleast_2d(x), beta, selection))
    return w[0] if x.ndim == 1 else w


def pooled_log_score(log_densities, weights=None, log_w=None) -> float:
    """``sum_t log sum_i w_{i,t} p_{i,t}`` computed as a log-sum-exp.

    Pass either ``weights`` (``(T, m)`` or a single ``(m,)`` vector used at
    every t) or their logarithms ``log_w``.
    """
    logp = np.atleast_2d(np.asarray(getattr(log_densities, "log_densities", log_densities), dtype=float))
    if log_w is None:
        with np.errstate(divide="ignore"):
            log_w = np.log(np.asarray(weights, dtype=float))
    log_w = np.broadcast_to(log_w, logp.shape)
    per_t = logsumexp(log_w + logp, axis=1)
    total = float(per_t.sum())
    if not np.isfinite(total):
        raise NonFiniteScore("pooled log score is not finite")
    return total


def pooled_log_densities(log_densities, log_w) -> np.ndarray:
    """Per-row log density of the mixture."""
    logp = np.atleast_2d(np.asarray(getattr(log_densities, "log_densities", log_densities), dtype=float))
    return logsumexp(np.broadcast_to(log_w, logp.shape) + logp, axis=1)


def log_indicator_prior(selection: np.ndarray) -> float:
    """Beta(1, 1)-integrated Bernoulli prior: ``log k! (n-k)! / (n+1)!`` per row."""
    sel = np.asarray(selection).astype(bool)
    n = sel.shape[1]
    k = sel.sum(axis=1)
    return float(np.sum(gammaln(k + 1) + gammaln(n - k + 1) - gammaln(n + 2)))


def log_prior(beta, selection, prior: PriorConfig) -> float:
    beta = np.asarray(beta, dtype=float)
    mask = coefficient_mask(selection, beta.shape)
    active = beta[mask]
    out = -0.5 * active.size * math.log(2.0 * math.pi * prior.sigma2)
    out -= 0.5 * float(active @ active) / prior.sigma2
    if selection is not None:
        out += log_indicator_prior(selection)
    return float(out)


def log_posterior(beta, selection, log_densities, features, prior: PriorConfig) -> float:
    """Pooled log score plus log prior (additive constant dropped)."""
    lw = log_weights(design_matrix(features), beta, selection)
    return pooled_log_score(log_densities, log_w=lw) + log_prior(beta, selection, prior)


def grad_log_posterior(beta, selection, log_densities, features, prior: PriorConfig) -> np.ndarray:
    """Analytic gradient of :func:`log_posterior` with respect to ``beta``.

    ``d/d beta_ij = sum_t x_tj (r_it - w_it) - beta_ij / sigma2`` where ``r_it``
    is model i's posterior responsibility ``w_it p_it / q_t``. Masked entries
    are zero.
    """
    design = design_matrix(features)
    return _value_and_grad(np.asarray(beta, dtype=float), selection, _logp(log_densities), design, prior)[1]


def _logp(log_densities) -> np.ndarray:
    return np.atleast_2d(np.asarray(getattr(log_densities, "log_densities", log_densities), dtype=float))


def _value_and_grad(beta, selection, logp, design, prior: PriorConfig):
    mask = coefficient_mask(selection, beta.shape)
    lw = log_weights(design, beta, selection)
    joint = lw + logp
    logq = logsumexp(joint, axis=1)
    resp = np.exp(joint - logq[:, None])
    w = np.exp(lw)
    eff = beta * mask
    value = float(logq.sum())
    value += -0.5 * mask.sum() * math.log(2.0 * math.pi * prior.sigma2) - 0.5 * float(np.sum(eff * eff)) / prior.sigma2
    if selection is not None:
        value += log_indicator_prior(selection)
    grad = (resp[:, :-1] - w[:, :-1]).T @ design - eff / prior.sigma2
    grad[~mask] = 0.0
    return value, grad


class LogPosterior:
    """Log posterior over the active coefficients, for optimizers.

    Works on the flat vector of active entries of ``beta``; :meth:`unflatten`
    rebuilds the full matrix with zeros in masked positions.
    """

    def __init__(self, log_densities, features, prior: PriorConfig, selection=None):
        self.logp = _logp(log_densities)
        self.design = design_matrix(features)
        if self.design.shape[0] != self.logp.shape[0]:
            raise ValueError("feature rows and density rows differ")
        self.prior = prior
        self.selection = None if selection is None else np.asarray(selection).astype(int)
        self.shape = (self.logp.shape[1] - 1, self.design.shape[1])
        self.mask = coefficient_mask(self.selection, self.shape)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def unflatten(self, theta) -> np.ndarray:
        beta = np.zeros(self.shape)
        beta[self.mask] = theta
        return beta

    def flatten(self, beta) -> np.ndarray:
        return np.asarray(beta, dtype=float)[self.mask]

    def value_and_grad(self, theta):
        value, grad = _value_and_grad(self.unflatten(theta), self.selection, self.logp, self.design, self.prior)
        return value, grad[self.mask]

    def value(self, theta) -> float:
        return self.value_and_grad(theta)[0]
