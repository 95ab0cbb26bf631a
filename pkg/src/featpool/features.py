"""Time-varying series features computed from a history slice.

All features are computed from the values handed in, so the caller controls
look-ahead by slicing (see :func:`featpool.core.history_slices`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FeatureMatrix, TimeSeries, WindowSpec, history_slices
from .errors import DataError, GarchDegenerate, InsufficientHistory
from .models import fit_ets_aan, fit_garch11

FEATURE_NAMES = (
    "alpha",
    "beta",
    "arch_acf",
    "arch_r2",
    "crossing_points",
    "diff1x_pacf5",
    "diff2_acf1",
    "diff2_acf10",
    "entropy",
    "garch_acf",
    "garch_r2",
    "nonlinearity",
    "trend",
    "unitroot_kpss",
    "x_acf1",
)

# minimum history length per feature
MIN_LENGTH = {
    "alpha": 10,
    "beta": 10,
    "arch_acf": 14,
    "arch_r2": 26,
    "crossing_points": 2,
    "diff1x_pacf5": 7,
    "diff2_acf1": 4,
    "diff2_acf10": 13,
    "entropy": 4,
    "garch_acf": 26,
    "garch_r2": 26,
    "nonlinearity": 6,
    "trend": 5,
    "unitroot_kpss": 3,
    "x_acf1": 3,
}

ARCH_LAGS = 12


@dataclass(frozen=True)
class FeatureCatalog:
    names: tuple

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise ValueError("feature catalog must not be empty")
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        unknown = [n for n in names if n not in FEATURE_NAMES]
        if unknown:
            raise ValueError(f"unknown features {unknown}")

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    @property
    def min_length(self) -> int:
        return max(MIN_LENGTH[n] for n in self.names)


FULL_CATALOG = FeatureCatalog(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple
    flags: tuple = ()

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))


# ----------------------------------------------------------------------------
# building blocks
# ----------------------------------------------------------------------------


def acf(x: np.ndarray, nlags: int) -> np.ndarray:
    """Autocorrelations ``r_1..r_nlags`` with the divisor-n autocovariance.

    A constant series has all autocorrelations defined as 0.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    c0 = d @ d / n
    out = np.zeros(nlags)
    if c0 <= 0:
        return out
    for h in range(1, min(nlags, n - 1) + 1):
        out[h - 1] = (d[:-h] @ d[h:]) / n / c0
    return out


def pacf_from_acf(r: np.ndarray) -> np.ndarray:
    """Partial autocorrelations from ``r_1..r_k`` by Durbin-Levinson."""
    k = r.size
    out = np.zeros(k)
    if k == 0:
        return out
    phi = np.zeros(k)
    phi[0] = out[0] = r[0]
    v = 1.0 - r[0] ** 2
    for m in range(1, k):
        if v <= 0:
            break
        a = (r[m] - phi[:m] @ r[m - 1 :: -1][:m]) / v
        new = phi[:m] - a * phi[:m][::-1]
        phi[:m] = new
        phi[m] = a
        out[m] = a
        v *= 1.0 - a * a
    return out


def _r_squared(X: np.ndarray, y: np.ndarray) -> float:
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss <= 0:
        return 0.0
    return float(min(max(1.0 - (resid @ resid) / tss, 0.0), 1.0))


def _lagged(x: np.ndarray, lags: int):
    n = x.size
    X = np.ones((n - lags, lags + 1))
    for k in range(1, lags + 1):
        X[:, k] = x[lags - k : n - k]
    return X, x[lags:]


# ----------------------------------------------------------------------------
# individual features
# ----------------------------------------------------------------------------


def x_acf1(y) -> float:
    return float(acf(y, 1)[0])


def diff2_acf1(y) -> float:
    return float(acf(np.diff(y, 2), 1)[0])


def diff2_acf10(y) -> float:
    return float(np.sum(acf(np.diff(y, 2), 10) ** 2))


def diff1x_pacf5(y) -> float:
    return float(np.sum(pacf_from_acf(acf(np.diff(y), 5)) ** 2))


def crossing_points(y) -> int:
    y = np.asarray(y, dtype=float)
    above = y > np.median(y)
    return int(np.count_nonzero(above[1:] != above[:-1]))


def spectral_entropy(y) -> float:
    """Normalized Shannon entropy of the raw periodogram (zero frequency dropped)."""
    y = np.asarray(y, dtype=float)
    n = y.size
    spec = np.abs(np.fft.rfft(y - y.mean())[1:]) ** 2 / n
    total = spec.sum()
    if total <= 0 or spec.size < 2:
        return 1.0
    p = spec / total
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)) / math.log(p.size))


def trend_strength(y) -> float:
    """``1 - Var(residual) / Var(y)`` after a cubic least-squares fit in time."""
    y = np.asarray(y, dtype=float)
    n = y.size
    vy = y.var()
    if vy <= 0:
        return 0.0
    t = np.linspace(-1.0, 1.0, n)
    basis = np.polynomial.legendre.legvander(t, 3)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = y - basis @ coef
    return float(max(0.0, 1.0 - resid.var() / vy))


def kpss_lags(n: int) -> int:
    return int(math.floor(4.0 * (n / 100.0) ** 0.25))


def unitroot_kpss(y) -> float:
    """Level-stationarity KPSS statistic with a Bartlett long-run variance."""
    y = np.asarray(y, dtype=float)
    n = y.size
    e = y - y.mean()
    lrv = e @ e / n
    for j in range(1, kpss_lags(n) + 1):
        if j >= n:
            break
        lrv += 2.0 * (1.0 - j / (kpss_lags(n) + 1.0)) * (e[j:] @ e[:-j]) / n
    if lrv <= 0:
        return 0.0
    s = np.cumsum(e)
    return float(s @ s / (n * n * lrv))


def _arch_stats(z: np.ndarray) -> tuple:
    z2 = z * z
    acf_stat = float(np.sum(acf(z2, ARCH_LAGS) ** 2))
    X, target = _lagged(z2, ARCH_LAGS)
    return acf_stat, _r_squared(X, target)


def arch_stats(y) -> tuple:
    y = np.asarray(y, dtype=float)
    return _arch_stats(y - y.mean())


def garch_stats(y) -> tuple:
    """ARCH statistics of GARCH(1,1) standardized residuals.

    If the GARCH fit is degenerate the demeaned series scaled by its sd is used.
    """
    y = np.asarray(y, dtype=float)
    z = y - y.mean()
    sd = z.std()
    if sd <= 0:
        return 0.0, 0.0
    try:
        fit = fit_garch11(z, check_length=False)
        std_resid = fit.standardized_residuals
    except GarchDegenerate:
        std_resid = z / sd
    return _arch_stats(std_resid)


def nonlinearity(y) -> float:
    """``n R^2`` from regressing AR(1) residuals on a cubic in the lagged value."""
    y = np.asarray(y, dtype=float)
    if np.ptp(y) == 0:
        return 0.0
    # centre and scale so that the cubic design stays well conditioned
    u = (y - y.mean()) / y.std()
    X, target = _lagged(u, 1)
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ coef
    lag = X[:, 1]
    Z = np.column_stack([np.ones_like(lag), lag, lag**2, lag**3])
    return float(resid.size * _r_squared(Z, resid))


def ets_params(y) -> tuple:
    fit = fit_ets_aan(y)
    return fit.alpha, fit.beta


# ----------------------------------------------------------------------------
# public API
# ----------------------------------------------------------------------------


def compute_features(history, catalog) -> FeatureVector:
    """Compute every catalog feature on ``history``.

    Raises :class:`InsufficientHistory` if the slice is shorter than the
    longest per-feature requirement. A constant slice gets ACF-type features
    of 0 and entropy 1, and the vector carries the ``constant_series`` flag.
    """
    if not isinstance(catalog, FeatureCatalog):
        catalog = FeatureCatalog(tuple(catalog))
    y = np.asarray(getattr(history, "values", history), dtype=float)
    if y.size < catalog.min_length:
        raise InsufficientHistory(
            f"features need at least {catalog.min_length} observations, got {y.size}"
        )
    if not np.all(np.isfinite(y)):
        raise DataError("history contains non-finite values")
    flags = ("constant_series",) if np.ptp(y) == 0 else ()
    names = catalog.names
    cache: dict = {}

    def get(name):
        if name in ("alpha", "beta"):
            if "ets" not in cache:
                cache["ets"] = ets_params(y)
            return cache["ets"][0 if name == "alpha" else 1]
        if name in ("arch_acf", "arch_r2"):
            if "arch" not in cache:
                cache["arch"] = arch_stats(y)
            return cache["arch"][0 if name == "arch_acf" else 1]
        if name in ("garch_acf", "garch_r2"):
            if "garch" not in cache:
                cache["garch"] = garch_stats(y)
            return cache["garch"][0 if name == "garch_acf" else 1]
        return _SIMPLE[name](y)

    values = np.array([float(get(n)) for n in names])
    return FeatureVector(values, names, flags)


_SIMPLE = {
    "crossing_points": crossing_points,
    "diff1x_pacf5": diff1x_pacf5,
    "diff2_acf1": diff2_acf1,
    "diff2_acf10": diff2_acf10,
    "entropy": spectral_entropy,
    "nonlinearity": nonlinearity,
    "trend": trend_strength,
    "unitroot_kpss": unitroot_kpss,
    "x_acf1": x_acf1,
}


def build_feature_matrix(series, catalog, spec: WindowSpec) -> FeatureMatrix:
    """Raw (unstandardized) features for every target index ``t >= s``."""
    if not isinstance(catalog, FeatureCatalog):
        catalog = FeatureCatalog(tuple(catalog))
    if not isinstance(series, TimeSeries):
        series = TimeSeries("series", series)
    rows, index, flags = [], [], set()
    for t, hist in history_slices(series, spec):
        fv = compute_features(hist, catalog)
        rows.append(fv.values)
        index.append(t)
        flags.update(fv.flags)
    return FeatureMatrix(np.array(rows), catalog.names, np.array(index), tuple(sorted(flags)))


def features_at(values: np.ndarray, t: int, catalog, feature_window) -> np.ndarray:
    """Feature vector for target index ``t`` from ``values[:t]``."""
    lo = 0 if feature_window is None else max(0, t - feature_window)
    return compute_features(values[lo:t], catalog).values
