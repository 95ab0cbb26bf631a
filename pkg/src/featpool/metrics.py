"""Forecast accuracy: MASE, average log score and the Diebold-Mariano test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateScale


def mase(train, actuals, forecasts, period: int = 1) -> float:
    """Mean absolute scaled error.

    The scale is the in-sample mean absolute (seasonal) naive error of ``train``.
    """
    train = np.asarray(train, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    forecasts = np.asarray(forecasts, dtype=float)
    if actuals.shape != forecasts.shape:
        raise ValueError("actuals and forecasts differ in shape")
    if train.size <= period:
        raise DegenerateScale(f"need more than {period} training values for the MASE scale")
    scale = float(np.mean(np.abs(train[period:] - train[:-period])))
    if scale == 0:
        raise DegenerateScale("in-sample naive errors are all zero")
    return float(np.mean(np.abs(actuals - forecasts)) / scale)


def average_log_score(log_densities) -> float:
    ld = np.asarray(log_densities, dtype=float)
    if ld.size == 0:
        raise ValueError("no log densities")
    return float(np.mean(ld))


@dataclass(frozen=True)
class DMResult:
    statistic: float
    p_value: float
    degenerate: bool = False
    variance_clamped: bool = False


def dm_test(loss_a, loss_b, h: int = 1) -> DMResult:
    """Diebold-Mariano test of equal expected loss with the small-sample correction.

    The long-run variance of ``d = loss_a - loss_b`` uses autocovariances up to
    lag ``h - 1`` with uniform weights; if that is not positive it falls back
    to the lag-0 variance. The corrected statistic is compared with a t
    distribution on ``n - 1`` degrees of freedom (two-sided). Zero variance of
    ``d`` gives statistic 0 and p-value 1 with ``degenerate`` set.
    """
    d = np.asarray(loss_a, dtype=float) - np.asarray(loss_b, dtype=float)
    n = d.size
    if d.ndim != 1 or np.shape(loss_a) != np.shape(loss_b):
        raise ValueError("loss sequences must be one-dimensional and of equal length")
    if n < 10:
        raise ValueError("the DM test needs at least 10 loss pairs")
    if h < 1 or h >= n:
        raise ValueError("h must satisfy 1 <= h < n")
    e = d - d.mean()
    gamma = np.array([e[k:] @ e[: n - k] / n for k in range(h)])
    if gamma[0] <= 0:
        return DMResult(0.0, 1.0, degenerate=True)
    var = gamma[0] + 2.0 * gamma[1:].sum()
    clamped = var <= 0
    if clamped:
        var = gamma[0]
    dm = d.mean() / np.sqrt(var / n)
    dm *= np.sqrt((n + 1 - 2 * h + h * (h - 1) / n) / n)
    p = 2.0 * stats.t.sf(abs(dm), df=n - 1)
    return DMResult(float(dm), float(p), False, bool(clamped))
