"""Training pipeline, combined forecasts and recursive out-of-sample evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import FeatureMatrix, StandardizationStats, TimeSeries, WindowSpec, standardize
from .errors import DataError, InsufficientHistory
from .features import FULL_CATALOG, FeatureCatalog, build_feature_matrix, features_at
from .inference import (
    InferenceConfig,
    PosteriorDraw,
    gibbs_select,
    map_estimate,
    selection_frequencies,
)
from .metrics import mase
from .models import DensityMatrix, ModelSpec, build_density_matrix, parse_models
from .pool import PriorConfig, design_matrix, log_posterior, log_weights, pooled_log_densities
from .relief import label_best_model, relieff_rank, select_top_k

log = logging.getLogger(__name__)

MODES = ("SA", "OP", "FEBAMA", "FEBAMA_VS")


@dataclass(frozen=True)
class ScreeningConfig:
    """ReliefF screening settings. ``candidates`` is the catalog to rank from."""

    candidates: tuple = FULL_CATALOG.names
    k_neighbors: int = 5
    sample_count: Optional[int] = None


@dataclass
class TrainingData:
    """Density matrix plus raw candidate features over the same target indices."""

    series: TimeSeries
    density: DensityMatrix
    features: Optional[FeatureMatrix]
    models: list
    spec: WindowSpec

    def upto(self, t: int) -> "TrainingData":
        """Rows whose target index is below ``t``."""
        mask = self.density.target_indices < t
        return TrainingData(
            self.series,
            self.density.rows(mask),
            None if self.features is None else self.features.rows(mask),
            self.models,
            self.spec,
        )


def prepare(series, models, spec: WindowSpec, candidates: Sequence[str] = ()) -> TrainingData:
    if not isinstance(series, TimeSeries):
        series = TimeSeries("series", series)
    models = parse_models(models)
    density = build_density_matrix(series, models, spec)
    features = None
    if candidates:
        spec.check_features(candidates)
        features = build_feature_matrix(series, FeatureCatalog(tuple(candidates)), spec)
    return TrainingData(series, density, features, models, spec)


@dataclass
class CombinationFit:
    mode: str
    models: list
    spec: WindowSpec
    prior: PriorConfig
    catalog: tuple = ()
    stats: Optional[StandardizationStats] = None
    beta: Optional[np.ndarray] = None
    draws: list = field(default_factory=list)
    ranking: list = field(default_factory=list)
    log_posterior: Optional[float] = None
    in_sample_ls: Optional[float] = None

    @property
    def n_models(self) -> int:
        return len(self.models)

    def weights_for(self, raw_features: np.ndarray) -> np.ndarray:
        """Combination weights for raw (unstandardized) feature rows, shape ``(T, m)``."""
        raw = np.atleast_2d(np.asarray(raw_features, dtype=float))
        m = self.n_models
        if self.mode == "SA":
            return np.full((raw.shape[0], m), 1.0 / m)
        x = self.stats.apply(raw) if self.catalog else np.zeros((raw.shape[0], 0))
        design = design_matrix(x)
        if self.mode == "FEBAMA_VS":
            return np.mean([np.exp(log_weights(design, d.beta, d.selection)) for d in self.draws], axis=0)
        return np.exp(log_weights(design, self.beta))

    def selection_frequencies(self) -> Optional[np.ndarray]:
        return selection_frequencies(self.draws) if self.draws else None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "models": [m.name for m in self.models],
            "window": {
                "min_length_s": self.spec.min_length_s,
                "feature_window": self.spec.feature_window,
                "model_window": self.spec.model_window,
            },
            "sigma2": self.prior.sigma2,
            "catalog": list(self.catalog),
            "stats": None if self.stats is None else self.stats.to_dict(),
            "beta": None if self.beta is None else self.beta.tolist(),
            "draws": [
                {"selection": d.selection.tolist(), "beta": d.beta.tolist(),
                 "log_posterior": d.log_posterior_value}
                for d in self.draws
            ],
            "ranking": [[name, w] for name, w in self.ranking],
            "log_posterior": self.log_posterior,
            "in_sample_ls": self.in_sample_ls,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CombinationFit":
        return cls(
            mode=d["mode"],
            models=parse_models(d["models"]),
            spec=WindowSpec(**d["window"]),
            prior=PriorConfig(d["sigma2"]),
            catalog=tuple(d["catalog"]),
            stats=None if d["stats"] is None else StandardizationStats.from_dict(d["stats"]),
            beta=None if d["beta"] is None else np.asarray(d["beta"], dtype=float).reshape(len(d["models"]) - 1, -1),
            draws=[
                PosteriorDraw(np.asarray(x["selection"], dtype=int).reshape(len(d["models"]) - 1, -1),
                              np.asarray(x["beta"], dtype=float).reshape(len(d["models"]) - 1, -1),
                              x["log_posterior"])
                for x in d["draws"]
            ],
            ranking=[(n, w) for n, w in d["ranking"]],
            log_posterior=d["log_posterior"],
            in_sample_ls=d["in_sample_ls"],
        )


def _screen(data: TrainingData, k: int, screening: ScreeningConfig, seed: int):
    """ReliefF ranking of the candidate features and the top-k catalog."""
    fm = data.features
    if k == 0 or fm is None:
        return (), []
    if k > len(fm.names):
        raise ValueError(f"k={k} exceeds the {len(fm.names)} candidate features")
    X, _ = standardize(fm)
    labels = label_best_model(data.density)
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        log.warning("a single model is best everywhere; keeping candidate order for screening")
        ranked = [(n, 0.0) for n in fm.names]
    else:
        distinct = min(np.unique(X.values[labels == c], axis=0).shape[0] for c in classes)
        k_nb = max(1, min(screening.k_neighbors, distinct - 1))
        if k_nb < screening.k_neighbors:
            log.info("ReliefF k_neighbors reduced to %d (smallest class size)", k_nb)
        if distinct < 2:
            ranked = [(n, 0.0) for n in fm.names]
        else:
            ranked = relieff_rank(X, labels, k_nb, screening.sample_count, seed, names=fm.names)
    return select_top_k(ranked, k).names, ranked


def fit_combination(
    data: TrainingData,
    mode: str,
    prior: PriorConfig,
    config: InferenceConfig = InferenceConfig(),
    catalog: Sequence[str] = (),
    ranking: Sequence = (),
    warm: Optional["CombinationFit"] = None,
) -> CombinationFit:
    """Estimate one combination mode on prepared training data with a fixed catalog."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    dm = data.density
    m = dm.n_models
    fit = CombinationFit(mode, data.models, data.spec, prior, ranking=list(ranking))
    if mode == "SA" or m == 1:
        fit.mode = mode
        fit.beta = np.zeros((m - 1, 1)) if mode != "SA" else None
        if mode == "FEBAMA_VS":
            fit.mode = "OP"
        w = np.full(m, 1.0 / m)
        fit.in_sample_ls = float(pooled_log_densities(dm, np.log(w)).sum())
        return fit

    catalog = tuple(catalog) if mode in ("FEBAMA", "FEBAMA_VS") else ()
    if catalog:
        if dm.log_densities.shape[0] < 2:
            raise InsufficientHistory("need at least 2 training rows to standardize features")
        X, stats = standardize(data.features.select(catalog))
        x = X.values
    else:
        stats = None
        x = np.zeros((dm.log_densities.shape[0], 0))
    fit.catalog, fit.stats = catalog, stats
    n = len(catalog)

    rng = np.random.default_rng(config.seed)
    if mode == "FEBAMA_VS" and n > 0:
        init_sel = None
        if warm is not None and warm.draws and warm.catalog == catalog:
            init_sel = warm.draws[-1].selection
        run = gibbs_select(dm, x, prior, config, initial_selection=init_sel)
        fit.draws = list(run.draws)
        w = fit.weights_for(data.features.select(catalog).values) if n else None
        fit.in_sample_ls = float(pooled_log_densities(dm, np.log(w)).sum())
        fit.log_posterior = float(np.mean([d.log_posterior_value for d in fit.draws]))
        return fit

    # OP (intercept only); also the warm start that FEBAMA must improve on
    op_init = None
    if warm is not None and warm.beta is not None:
        op_init = warm.beta[:, :1]
    op = map_estimate(dm, np.zeros((x.shape[0], 0)), prior, None, config, init=op_init, rng=rng,
                      restarts=0 if op_init is not None else None)
    if n == 0:
        beta, value = op.beta, op.value
    else:
        inits = [np.column_stack([op.beta, np.zeros((m - 1, n))])]
        if warm is not None and warm.beta is not None and warm.beta.shape == (m - 1, n + 1):
            inits.append(warm.beta)
        best = None
        for init in inits:
            res = map_estimate(dm, x, prior, None, config, init=init, rng=rng,
                               restarts=0 if warm is not None else None)
            if best is None or res.value > best.value:
                best = res
        beta, value = best.beta, best.value
    fit.mode = mode if n > 0 or mode == "OP" else "FEBAMA"
    fit.beta, fit.log_posterior = beta, value
    fit.in_sample_ls = float(pooled_log_densities(dm, log_weights(design_matrix(x), beta)).sum())
    return fit


def train_pipeline(
    series,
    models: Sequence,
    spec: WindowSpec,
    prior: PriorConfig,
    mode: str,
    k: int,
    config: InferenceConfig = InferenceConfig(),
    screening: ScreeningConfig = ScreeningConfig(),
    data: Optional[TrainingData] = None,
) -> CombinationFit:
    """Build the training matrices, screen features, and estimate the combination.

    ``k`` is the number of ReliefF-ranked features kept for FEBAMA modes
    (ignored for SA and OP).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if len(getattr(series, "values", series)) <= spec.min_length_s + 1:
        raise InsufficientHistory("series must be longer than min_length_s + 1")
    use_features = mode in ("FEBAMA", "FEBAMA_VS") and k > 0
    if data is None:
        data = prepare(series, models, spec, screening.candidates if use_features else ())
    catalog, ranking = _screen(data, k, screening, config.seed) if use_features else ((), [])
    return fit_combination(data, mode, prior, config, catalog, ranking)


# ----------------------------------------------------------------------------
# forecasting
# ----------------------------------------------------------------------------


@dataclass
class ForecastResult:
    points: np.ndarray
    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    model_names: tuple

    @property
    def horizon(self) -> int:
        return self.points.size

    def logpdf(self, actuals) -> np.ndarray:
        """Log density of the mixture at ``actuals[h]`` for each step."""
        y = np.asarray(actuals, dtype=float)[: self.horizon, None]
        z = (y - self.means) / self.sds
        comp = -0.5 * z * z - np.log(self.sds) - 0.5 * np.log(2 * np.pi)
        with np.errstate(divide="ignore"):
            return logsumexp(np.log(self.weights) + comp, axis=1)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "models": list(self.model_names),
            "steps": [
                {
                    "h": h + 1,
                    "point": float(self.points[h]),
                    "weights": self.weights[h].tolist(),
                    "components": [
                        {"model": name, "mean": float(self.means[h, i]), "sd": float(self.sds[h, i])}
                        for i, name in enumerate(self.model_names)
                    ],
                }
                for h in range(self.horizon)
            ],
        }


def forecast_h(fit: CombinationFit, series, H: int, refit: bool = True) -> ForecastResult:
    """Combined forecasts for ``h = 1..H``.

    After each step the combined point forecast is appended as a pseudo
    observation; features (and, with ``refit``, the component models) are then
    recomputed on the extended series. With ``refit=False`` the component
    densities are the models' own h-step forecasts from the observed history.
    """
    if H < 1:
        raise ValueError("horizon must be >= 1")
    values = np.array(getattr(series, "values", series), dtype=float)
    if values.size < fit.spec.min_length_s:
        raise InsufficientHistory("series shorter than min_length_s")
    m = fit.n_models
    mw = fit.spec.model_window
    frozen = None
    if not refit:
        hist = values if mw is None else values[-mw:]
        frozen = [spec.predict(hist, H) for spec in fit.models]
    catalog = FeatureCatalog(fit.catalog) if fit.catalog else None
    points = np.empty(H)
    weights = np.empty((H, m))
    means = np.empty((H, m))
    sds = np.empty((H, m))
    for h in range(H):
        if refit:
            hist = values if mw is None else values[-mw:]
            dens = [spec.predict(hist, 1)[0] for spec in fit.models]
        else:
            dens = [frozen[i][h] for i in range(m)]
        means[h] = [d.mean for d in dens]
        sds[h] = [d.sd for d in dens]
        if catalog is not None:
            raw = features_at(values, values.size, catalog, fit.spec.feature_window)
        else:
            raw = np.zeros(0)
        weights[h] = fit.weights_for(raw[None, :])[0]
        points[h] = float(weights[h] @ means[h])
        values = np.append(values, points[h])
    return ForecastResult(points, weights, means, sds, tuple(s.name for s in fit.models))


# ----------------------------------------------------------------------------
# recursive out-of-sample evaluation
# ----------------------------------------------------------------------------


@dataclass
class ModeTrack:
    mode: str
    target_indices: np.ndarray
    log_scores: np.ndarray
    points: np.ndarray
    weights: np.ndarray

    @property
    def average_ls(self) -> float:
        return float(np.mean(self.log_scores))


@dataclass
class OosResult:
    tracks: dict
    actuals: np.ndarray
    train: np.ndarray
    catalog: tuple

    def table(self) -> list:
        rows = []
        for mode, tr in self.tracks.items():
            rows.append({"mode": mode, "LS": tr.average_ls, "MASE": mase(self.train, self.actuals, tr.points)})
        return rows


def recursive_oos_evaluate(
    series,
    models: Sequence,
    spec: WindowSpec,
    prior: PriorConfig,
    modes: Sequence[str],
    config: InferenceConfig = InferenceConfig(),
    start_t: int = 0,
    k: int = 0,
    screening: ScreeningConfig = ScreeningConfig(),
    data: Optional[TrainingData] = None,
    catalog: Optional[Sequence[str]] = None,
    refit_every: int = 1,
    reselect: bool = False,
) -> OosResult:
    """One-step-ahead evaluation where the density for ``y_t`` uses only ``y[:t]``.

    For every target index ``t >= start_t`` each mode is re-estimated on the
    density/feature rows with target index ``< t`` (warm-started from the
    previous solution) and scored on row ``t``. The feature subset is screened
    once on the rows before ``start_t`` unless ``catalog`` is given; with
    ``reselect`` it is screened again at every refit.
    """
    s = spec.min_length_s
    if start_t <= s + 1:
        raise ValueError(f"start_t must exceed min_length_s + 1 = {s + 1}")
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
    needs_features = any(md in ("FEBAMA", "FEBAMA_VS") for md in modes) and (k > 0 or catalog)
    if data is None:
        cands = tuple(catalog) if catalog else screening.candidates
        data = prepare(series, models, spec, cands if needs_features else ())
    y = data.series.values
    T = y.size
    if start_t >= T:
        raise InsufficientHistory("start_t must be inside the series")
    if catalog is None:
        catalog = _screen(data.upto(start_t), k, screening, config.seed)[0] if needs_features else ()
    catalog = tuple(catalog)
    dm = data.density
    row_of = {int(t): r for r, t in enumerate(dm.target_indices)}
    targets = np.arange(start_t, T)

    tracks = {}
    for mode in modes:
        cat = catalog if mode in ("FEBAMA", "FEBAMA_VS") else ()
        scores, points, weights = [], [], []
        prev = None
        for step, t in enumerate(targets):
            if prev is None or step % refit_every == 0:
                train = data.upto(t)
                if reselect and cat:
                    cat = _screen(train, len(cat), screening, config.seed)[0]
                prev = fit_combination(train, mode, prior, config, cat, warm=prev)
                cat = prev.catalog
            r = row_of[int(t)]
            raw = data.features.select(cat).values[r] if cat else np.zeros(0)
            w = prev.weights_for(raw[None, :])[0]
            with np.errstate(divide="ignore"):
                scores.append(float(logsumexp(np.log(w) + dm.log_densities[r])))
            points.append(float(w @ dm.means[r]))
            weights.append(w)
        tracks[mode] = ModeTrack(mode, targets, np.array(scores), np.array(points), np.array(weights))
    return OosResult(tracks, y[start_t:], y[:start_t], catalog)
