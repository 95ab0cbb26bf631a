"""Component forecasting models with plug-in Gaussian predictive densities.

Every model is refit from scratch on the history it is given and returns a
list of :class:`PredictiveDensity`, one per horizon step. Recursions are run
through ``scipy.signal.lfilter`` so that refitting at every time index stays
cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, signal

from .errors import ConvergenceError, DataError, GarchDegenerate, InsufficientHistory

SD_FLOOR = 1e-8
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

MODEL_KINDS = ("naive", "rw_drift", "ets_aan", "ar", "garch11")


@dataclass(frozen=True)
class PredictiveDensity:
    mean: float
    sd: float
    flags: tuple = ()

    def logpdf(self, y) -> np.ndarray:
        z = (np.asarray(y, dtype=float) - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - LOG_SQRT_2PI


def _floor_sd(sd: float, flags: list, sd_floor: float) -> float:
    if not np.isfinite(sd) or sd < sd_floor:
        flags.append("sd_floored")
        return sd_floor
    return float(sd)


def _as_array(history) -> np.ndarray:
    values = getattr(history, "values", history)
    return np.asarray(values, dtype=float)


# --------------------------------------------------------------------------
# naive / random walk with drift
# --------------------------------------------------------------------------


def fit_predict_naive(history, h: int = 1, sd_floor: float = SD_FLOOR) -> list:
    y = _as_array(history)
    if y.size < 2:
        raise InsufficientHistory("naive needs at least 2 observations")
    d = np.diff(y)
    sigma = d.std(ddof=1) if d.size > 1 else 0.0
    last = float(y[-1])
    out = []
    for k in range(1, h + 1):
        flags: list = []
        sd = _floor_sd(sigma * math.sqrt(k), flags, sd_floor)
        out.append(PredictiveDensity(last, sd, tuple(flags)))
    return out


def fit_predict_rwdrift(history, h: int = 1, sd_floor: float = SD_FLOOR) -> list:
    y = _as_array(history)
    n = y.size
    if n < 3:
        raise InsufficientHistory("rw_drift needs at least 3 observations")
    d = np.diff(y)
    drift = d.mean()
    sigma = (d - drift).std(ddof=1)
    last = float(y[-1])
    out = []
    for k in range(1, h + 1):
        flags: list = []
        sd = _floor_sd(sigma * math.sqrt(k * (1.0 + k / (n - 1))), flags, sd_floor)
        out.append(PredictiveDensity(last + k * drift, sd, tuple(flags)))
    return out


# --------------------------------------------------------------------------
# ETS(A,A,N)
# --------------------------------------------------------------------------

ETS_ALPHA_BOUNDS = (1e-4, 0.9999)
ETS_START = (0.1, 0.01)


@dataclass(frozen=True)
class EtsFit:
    alpha: float
    beta: float
    level: float
    trend: float
    residuals: np.ndarray
    optimizer: dict = field(default_factory=dict)

    @property
    def sse(self) -> float:
        return float(self.residuals @ self.residuals)


def ets_initial_state(y: np.ndarray) -> tuple:
    """Least-squares line through the first 10 points; level is its value at time 0."""
    t = np.arange(1, 11, dtype=float)
    slope, intercept = np.polyfit(t, y[:10], 1)
    return float(intercept), float(slope)


def ets_errors(y: np.ndarray, alpha: float, beta: float, level0: float, trend0: float):
    """One-step errors of Holt's linear method.

    The error sequence has the rational transfer function
    ``(1 - B)^2 / (1 + (alpha + beta - 2) B + (1 - alpha) B^2)``; the
    contribution of the initial state is the homogeneous solution, added via an
    impulse with matching first two values.
    """
    a = np.array([1.0, alpha + beta - 2.0, 1.0 - alpha])
    zero_state = signal.lfilter([1.0, -2.0, 1.0], a, y)
    e1 = -(level0 + trend0)
    e2 = -((1.0 - alpha) * (level0 + trend0) - beta * level0 + (1.0 - beta) * trend0)
    impulse = np.zeros_like(y)
    impulse[0] = 1.0
    zero_input = signal.lfilter([e1, e2 + a[1] * e1], a, impulse)
    return zero_state + zero_input


def fit_ets_aan(y) -> EtsFit:
    """Least-squares Holt (ETS(A,A,N)) fit with ``beta <= alpha``.

    Bounded Nelder-Mead from a fixed start; ``beta`` is projected onto
    ``[1e-4, alpha]`` inside the objective and in the returned fit.
    """
    y = _as_array(y)
    if y.size < 10:
        raise InsufficientHistory("ETS(A,A,N) needs at least 10 observations")
    level0, trend0 = ets_initial_state(y)
    scale = float(np.sum((y - y.mean()) ** 2))
    if scale <= 0:
        scale = 1.0
    lo, hi = ETS_ALPHA_BOUNDS

    def project(p):
        alpha = min(max(p[0], lo), hi)
        beta = min(max(p[1], lo), alpha)
        return alpha, beta

    def objective(p):
        alpha, beta = project(p)
        e = ets_errors(y, alpha, beta, level0, trend0)
        return float(e @ e) / scale

    res = optimize.minimize(
        objective,
        np.array(ETS_START),
        method="Nelder-Mead",
        bounds=[ETS_ALPHA_BOUNDS, ETS_ALPHA_BOUNDS],
        options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 2000},
    )
    trace = {"nit": int(res.nit), "nfev": int(res.nfev), "message": str(res.message)}
    if not res.success or not np.isfinite(res.fun):
        raise ConvergenceError(f"ETS(A,A,N) fit did not converge: {trace}")
    alpha, beta = project(res.x)
    e = ets_errors(y, alpha, beta, level0, trend0)
    level = float(y[-1] - (1.0 - alpha) * e[-1])
    trend = float(trend0 + beta * e.sum())
    return EtsFit(alpha, beta, level, trend, e, trace)


def fit_predict_ets_aan(history, h: int = 1, sd_floor: float = SD_FLOOR) -> list:
    y = _as_array(history)
    fit = fit_ets_aan(y)
    flags: list = []
    sigma = _floor_sd(math.sqrt(fit.sse / y.size), flags, sd_floor)
    out = []
    acc = 0.0
    for k in range(1, h + 1):
        if k > 1:
            acc += (fit.alpha + fit.beta * (k - 1)) ** 2
        sd = sigma * math.sqrt(1.0 + acc)
        out.append(PredictiveDensity(fit.level + k * fit.trend, sd, tuple(flags)))
    return out


# --------------------------------------------------------------------------
# AR(p) by AIC
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ArFit:
    order: int
    intercept: float
    phi: np.ndarray
    sigma: float
    aic: dict
    flags: tuple = ()


def _lag_design(y: np.ndarray, p: int, start: int):
    rows = y.size - start
    X = np.ones((rows, p + 1))
    for k in range(1, p + 1):
        X[:, k] = y[start - k : y.size - k]
    return X, y[start:]


def is_stationary(phi: np.ndarray) -> bool:
    if phi.size == 0:
        return True
    # roots of 1 - phi_1 z - ... - phi_p z^p must lie outside the unit circle
    roots = np.roots(np.r_[-phi[::-1], 1.0])
    return bool(np.all(np.abs(roots) > 1.0))


def fit_ar(y, max_order: int = 5) -> ArFit:
    y = _as_array(y)
    need = max(4 * max_order, 2)
    if y.size < need:
        raise InsufficientHistory(f"AR with max_order={max_order} needs {need} observations")
    aic = {}
    for p in range(max_order + 1):
        X, target = _lag_design(y, p, max_order)
        coef, *_ = np.linalg.lstsq(X, target, rcond=None)
        resid = target - X @ coef
        s2 = float(resid @ resid) / target.size
        aic[p] = target.size * math.log(max(s2, 1e-300)) + 2.0 * (p + 1)
    order = min(aic, key=lambda p: (aic[p], p))
    flags = []
    while True:
        X, target = _lag_design(y, order, order)
        coef, *_ = np.linalg.lstsq(X, target, rcond=None)
        phi = coef[1:]
        if is_stationary(phi):
            break
        flags.append(f"nonstationary_order_{order}")
        order -= 1
    resid = target - X @ coef
    dof = max(target.size - order - 1, 1)
    sigma = math.sqrt(float(resid @ resid) / dof)
    return ArFit(order, float(coef[0]), phi, sigma, aic, tuple(flags))


def psi_weights(phi: np.ndarray, h: int) -> np.ndarray:
    psi = np.zeros(h)
    psi[0] = 1.0
    for j in range(1, h):
        for k in range(1, min(j, phi.size) + 1):
            psi[j] += phi[k - 1] * psi[j - k]
    return psi


def fit_predict_ar(history, h: int = 1, max_order: int = 5, sd_floor: float = SD_FLOOR) -> list:
    y = _as_array(history)
    fit = fit_ar(y, max_order)
    flags = list(fit.flags)
    sigma = _floor_sd(fit.sigma, flags, sd_floor)
    p = fit.order
    buf = list(y[-p:]) if p else []
    means = []
    for _ in range(h):
        m = fit.intercept + sum(fit.phi[k] * buf[-1 - k] for k in range(p))
        means.append(m)
        if p:
            buf.append(m)
    psi2 = np.cumsum(psi_weights(fit.phi, h) ** 2)
    return [
        PredictiveDensity(float(means[k]), max(sigma * math.sqrt(psi2[k]), sd_floor), tuple(flags))
        for k in range(h)
    ]


# --------------------------------------------------------------------------
# Gaussian GARCH(1,1)
# --------------------------------------------------------------------------

GARCH_START = (0.05, 0.90)
GARCH_PERSISTENCE_LIMIT = 1.0 - 1e-6
# below this alpha the variance path no longer depends on the data and beta is
# not identified; such fits collapse to the constant-variance model
GARCH_ALPHA_NEGLIGIBLE = 1e-4


@dataclass(frozen=True)
class GarchFit:
    mu: float
    omega: float
    alpha: float
    beta: float
    loglik: float
    sigma2: np.ndarray
    residuals: np.ndarray
    flags: tuple = ()

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta

    @property
    def standardized_residuals(self) -> np.ndarray:
        return self.residuals / np.sqrt(self.sigma2)

    def next_variance(self) -> float:
        return self.omega + self.alpha * self.residuals[-1] ** 2 + self.beta * self.sigma2[-1]


def garch_variance(eps: np.ndarray, omega: float, alpha: float, beta: float, sigma2_0: float):
    """Conditional variances with ``sigma2[0] = sigma2_0``."""
    sigma2 = np.empty_like(eps)
    sigma2[0] = sigma2_0
    if eps.size > 1:
        drive = omega + alpha * eps[:-1] ** 2
        sigma2[1:] = signal.lfilter([1.0], [1.0, -beta], drive, zi=[beta * sigma2_0])[0]
    return sigma2


def garch_loglik(y: np.ndarray, mu: float, omega: float, alpha: float, beta: float,
                 sigma2_0: Optional[float] = None) -> float:
    eps = y - mu
    if sigma2_0 is None:
        sigma2_0 = float(np.mean((y - y.mean()) ** 2))
    s2 = garch_variance(eps, omega, alpha, beta, sigma2_0)
    if np.any(s2 <= 0) or not np.all(np.isfinite(s2)):
        return -np.inf
    return float(-0.5 * np.sum(2 * LOG_SQRT_2PI + np.log(s2) + eps * eps / s2))


def _expit(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def _garch_unpack(theta) -> tuple:
    mu, log_omega, persist_logit, split_logit = theta
    persistence = _expit(persist_logit)
    split = _expit(split_logit)
    return mu, math.exp(log_omega), persistence * split, persistence * (1.0 - split)


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def garch_start(y: np.ndarray) -> tuple:
    """Starting point ``(mu, omega, alpha, beta)``: sample mean, sample variance
    as the implied unconditional variance, alpha=0.05, beta=0.90."""
    a0, b0 = GARCH_START
    var = float(np.mean((y - y.mean()) ** 2))
    return float(y.mean()), max(var, 1e-300) * (1.0 - a0 - b0), a0, b0


def garch_nll_and_grad(theta, z: np.ndarray):
    """Negative log likelihood (constant dropped) and its gradient in the
    unconstrained parameters, with ``sigma2[0] = 1``.

    The variance sensitivities obey the same recursion as the variance, so
    each is one linear filter pass.
    """
    if not np.all(np.isfinite(theta)) or abs(theta[1]) > 700.0:
        return 1e300, np.zeros(4)
    mu, omega, alpha, beta = _garch_unpack(theta)
    eps = z - mu
    s2 = garch_variance(eps, omega, alpha, beta, 1.0)
    if np.any(s2 <= 0) or not np.all(np.isfinite(s2)):
        return 1e300, np.zeros(4)
    e2 = eps * eps
    nll = 0.5 * float(np.sum(np.log(s2) + e2 / s2))
    c = 0.5 * (1.0 / s2 - e2 / (s2 * s2))
    drives = np.empty((4, z.size - 1))
    drives[0] = -2.0 * alpha * eps[:-1]
    drives[1] = 1.0
    drives[2] = e2[:-1]
    drives[3] = s2[:-1]
    ds2 = np.zeros((4, z.size))
    ds2[:, 1:] = signal.lfilter([1.0], [1.0, -beta], drives, axis=1)
    g_mu, g_omega, g_alpha, g_beta = ds2[:, 1:] @ c[1:]
    g_mu -= float(np.sum(eps / s2))
    P = alpha + beta
    S = alpha / P if P > 0 else 0.5
    dP = P * (1.0 - P)
    dS = S * (1.0 - S)
    grad = np.array([
        g_mu,
        g_omega * omega,
        (g_alpha * S + g_beta * (1.0 - S)) * dP,
        (g_alpha - g_beta) * P * dS,
    ])
    return nll, grad


def fit_garch11(y, check_length: bool = True, allow_boundary: bool = False) -> GarchFit:
    """Gaussian GARCH(1,1) maximum likelihood.

    Parameters are optimized in an unconstrained space: ``log omega``, the
    logit of ``alpha + beta`` and the logit of ``alpha / (alpha + beta)``.
    An optimum with ``alpha + beta >= 1 - 1e-6`` raises :class:`GarchDegenerate`
    unless ``allow_boundary``, in which case the persistence is clipped to that
    limit (split kept) and the fit carries the ``garch_boundary`` flag. A fit
    with vanishing alpha leaves beta unidentified; it is returned as the
    constant-variance model ``alpha = beta = 0``.
    """
    y = _as_array(y)
    if check_length and y.size < 50:
        raise InsufficientHistory("GARCH(1,1) needs at least 50 observations")
    var0 = float(np.mean((y - y.mean()) ** 2))
    if var0 <= 0:
        raise GarchDegenerate("GARCH(1,1) fit on a constant series")
    mu0, omega0, a0, b0 = garch_start(y)
    theta0 = np.array([mu0, math.log(omega0), _logit(a0 + b0), _logit(a0 / (a0 + b0))])
    # work on the unit-variance scale so that tolerances are scale free
    scale = math.sqrt(var0)
    z = y / scale

    def nll(theta):
        if abs(theta[1]) > 700.0:
            return 1e300
        mu, omega, alpha, beta = _garch_unpack(theta)
        val = garch_loglik(z, mu, omega, alpha, beta, 1.0)
        return -val if np.isfinite(val) else 1e300

    theta0_z = theta0.copy()
    theta0_z[0] = mu0 / scale
    theta0_z[1] = math.log(omega0 / var0)
    with np.errstate(over="ignore", invalid="ignore"):
        res = optimize.minimize(garch_nll_and_grad, theta0_z, args=(z,), jac=True, method="BFGS",
                                options={"gtol": 1e-6, "maxiter": 500})
    theta = res.x if res.fun <= nll(theta0_z) else theta0_z
    if not np.all(np.isfinite(theta)):
        raise GarchDegenerate(f"GARCH(1,1) optimizer failed: {res.message}")
    mu_z, omega_z, alpha, beta = _garch_unpack(theta)
    if alpha < GARCH_ALPHA_NEGLIGIBLE:
        mu, omega = float(y.mean()), var0
        loglik = garch_loglik(y, mu, omega, 0.0, 0.0, var0)
        if loglik >= -nll(theta0_z) - 0.5 * y.size * math.log(var0):
            eps = y - mu
            return GarchFit(mu, omega, 0.0, 0.0, loglik, np.full(y.size, var0), eps)
    flags = ()
    if alpha + beta >= GARCH_PERSISTENCE_LIMIT:
        if not allow_boundary:
            raise GarchDegenerate(
                f"GARCH(1,1) persistence at boundary: alpha={alpha:.6g} beta={beta:.6g} "
                f"({res.message}, nit={res.nit})"
            )
        shrink = GARCH_PERSISTENCE_LIMIT / (alpha + beta)
        alpha, beta = alpha * shrink, beta * shrink
        flags = ("garch_boundary",)
    mu, omega = mu_z * scale, omega_z * var0
    eps = y - mu
    sigma2 = garch_variance(eps, omega, alpha, beta, var0)
    loglik = float(-0.5 * np.sum(2 * LOG_SQRT_2PI + np.log(sigma2) + eps * eps / sigma2))
    return GarchFit(mu, omega, alpha, beta, loglik, sigma2, eps, flags)


def fit_predict_garch11(history, h: int = 1, sd_floor: float = SD_FLOOR, strict: bool = False) -> list:
    """GARCH(1,1) h-step densities. Boundary fits are clipped and flagged unless ``strict``."""
    fit = fit_garch11(history, allow_boundary=not strict)
    out = []
    s2 = fit.next_variance()
    for k in range(h):
        if k > 0:
            s2 = fit.omega + fit.persistence * s2
        flags: list = list(fit.flags)
        out.append(PredictiveDensity(fit.mu, _floor_sd(math.sqrt(s2), flags, sd_floor), tuple(flags)))
    return out


# --------------------------------------------------------------------------
# model specs and the density matrix
# --------------------------------------------------------------------------

_MIN_LENGTH = {"naive": 2, "rw_drift": 3, "ets_aan": 10, "garch11": 50}


@dataclass(frozen=True)
class ModelSpec:
    """A component model: its kind plus optional settings.

    ``window`` overrides the run-wide model window for this model only.
    ``anchor`` fits the model once on the first ``anchor`` observations and
    holds that estimate for every later target (a frozen reference model).
    ``strict`` makes a GARCH boundary fit an error instead of a flagged clip.
    Written as a string, ``"ar:max_order=0:window=50"`` or ``"garch11:strict=1"``.
    """

    kind: str
    window: Optional[int] = None
    max_order: int = 5
    strict: bool = False
    anchor: Optional[int] = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.window is not None and self.window < 1:
            raise ValueError("model window must be positive")
        if self.max_order < 0:
            raise ValueError("max_order must be >= 0")
        if self.anchor is not None:
            if self.window is not None:
                raise ValueError("anchor and window are mutually exclusive")
            if self.anchor < self.min_length:
                raise ValueError(f"anchor={self.anchor} is below the {self.kind} minimum length")

    @classmethod
    def parse(cls, text) -> "ModelSpec":
        if isinstance(text, ModelSpec):
            return text
        kind, *opts = str(text).strip().split(":")
        kwargs = {}
        for opt in opts:
            key, _, value = opt.partition("=")
            if key not in ("window", "max_order", "strict", "anchor"):
                raise ValueError(f"unknown model option {key!r} in {text!r}")
            kwargs[key] = bool(int(value)) if key == "strict" else int(value)
        return cls(kind, **kwargs)

    @property
    def name(self) -> str:
        parts = [self.kind]
        if self.kind == "ar" and self.max_order != 5:
            parts.append(f"max_order={self.max_order}")
        if self.window is not None:
            parts.append(f"window={self.window}")
        if self.anchor is not None:
            parts.append(f"anchor={self.anchor}")
        if self.strict:
            parts.append("strict=1")
        return ":".join(parts)

    @property
    def min_length(self) -> int:
        if self.kind == "ar":
            return max(4 * self.max_order, 2)
        return _MIN_LENGTH[self.kind]

    def predict(self, history, h: int = 1, sd_floor: float = SD_FLOOR) -> list:
        y = _as_array(history)
        if self.window is not None:
            y = y[-self.window :]
        if self.anchor is not None:
            y = y[: self.anchor]
        if self.kind == "naive":
            return fit_predict_naive(y, h, sd_floor)
        if self.kind == "rw_drift":
            return fit_predict_rwdrift(y, h, sd_floor)
        if self.kind == "ets_aan":
            return fit_predict_ets_aan(y, h, sd_floor)
        if self.kind == "ar":
            return fit_predict_ar(y, h, self.max_order, sd_floor)
        return fit_predict_garch11(y, h, sd_floor, self.strict)


def parse_models(models: Sequence) -> list:
    return [ModelSpec.parse(m) for m in models]


@dataclass(frozen=True)
class DensityMatrix:
    """Per-target-index, per-model one-step predictive log densities.

    ``means`` and ``sds`` hold the Gaussian predictive parameters behind each
    cell; ``log_densities`` are evaluated at the realized values.
    """

    log_densities: np.ndarray
    model_names: tuple
    target_indices: np.ndarray
    means: Optional[np.ndarray] = None
    sds: Optional[np.ndarray] = None

    def __post_init__(self):
        ld = np.atleast_2d(np.asarray(self.log_densities, dtype=float))
        object.__setattr__(self, "log_densities", ld)
        object.__setattr__(self, "model_names", tuple(self.model_names))
        object.__setattr__(self, "target_indices", np.asarray(self.target_indices, dtype=int))
        if ld.shape != (len(self.target_indices), len(self.model_names)):
            raise ValueError("density matrix shape does not match names / indices")
        if not np.all(np.isfinite(ld)):
            raise DataError("density matrix contains non-finite log densities")

    @property
    def n_models(self) -> int:
        return self.log_densities.shape[1]

    def rows(self, mask) -> "DensityMatrix":
        return DensityMatrix(
            self.log_densities[mask],
            self.model_names,
            self.target_indices[mask],
            None if self.means is None else self.means[mask],
            None if self.sds is None else self.sds[mask],
        )

    def columns(self, cols: Sequence[int]) -> "DensityMatrix":
        cols = list(cols)
        return DensityMatrix(
            self.log_densities[:, cols],
            tuple(self.model_names[c] for c in cols),
            self.target_indices,
            None if self.means is None else self.means[:, cols],
            None if self.sds is None else self.sds[:, cols],
        )

    def column_scores(self) -> np.ndarray:
        """Per-model log score (sum of log predictive densities)."""
        return self.log_densities.sum(axis=0)


class ModelFailure(Exception):
    """A component model failed at a particular cell of the density matrix."""

    def __init__(self, t: int, model: str, cause: Exception):
        self.t, self.model, self.cause = t, model, cause
        super().__init__(f"model {model!r} failed at t={t}: {cause}")


def one_step_densities(history, models: Sequence, model_window: Optional[int] = None,
                       sd_floor: float = SD_FLOOR) -> list:
    y = _as_array(history)
    if model_window is not None:
        y = y[-model_window:]
    return [spec.predict(y, 1, sd_floor)[0] for spec in models]


def build_density_matrix(series, models: Sequence, spec, sd_floor: float = SD_FLOOR) -> DensityMatrix:
    """Fit every model on the history before each target index and score ``y_t``.

    Rows cover target indices ``s, ..., T-1`` (0-based); each cell is computed
    independently from ``values[:t]`` (cut to the model window when set).
    """
    models = parse_models(models)
    y = _as_array(series)
    T, s = y.size, spec.min_length_s
    if T <= s:
        raise InsufficientHistory(f"series length {T} must exceed min_length_s={s}")
    for m in models:
        need = m.min_length
        avail = s if spec.model_window is None else min(s, spec.model_window)
        if m.window is not None:
            avail = min(avail, m.window)
        if m.anchor is not None:
            if spec.model_window is not None:
                raise ValueError(f"model {m.name} is anchored; a run-wide model window is not allowed")
            if m.anchor > s:
                raise ValueError(f"model {m.name}: anchor exceeds min_length_s={s}")
            avail = m.anchor
        if need > avail:
            raise ValueError(f"model {m.name} needs {need} observations but only {avail} are guaranteed")
    rows = T - s
    means = np.empty((rows, len(models)))
    sds = np.empty_like(means)
    for r, t in enumerate(range(s, T)):
        hist = y[:t]
        if spec.model_window is not None:
            hist = hist[-spec.model_window :]
        for i, m in enumerate(models):
            try:
                d = m.predict(hist, 1, sd_floor)[0]
            except Exception as exc:  # noqa: BLE001 - re-raised with cell context
                raise ModelFailure(t, m.name, exc) from exc
            means[r, i] = d.mean
            sds[r, i] = d.sd
    target = y[s:, None]
    z = (target - means) / sds
    logd = -0.5 * z * z - np.log(sds) - LOG_SQRT_2PI
    return DensityMatrix(logd, tuple(m.name for m in models), np.arange(s, T), means, sds)
