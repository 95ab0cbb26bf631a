"""Command-line interface: ``featpool <subcommand> [--config run.yaml] [flags]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import os
import platform
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import click
import numpy as np
import scipy
import yaml

from . import __version__
from .core import WindowSpec, load_collection, load_series
from .datasets import BUILTIN, builtin
from .errors import ConfigError, DataError, FeatpoolError, NumericalError
from .features import FEATURE_NAMES, FeatureCatalog, build_feature_matrix
from .forecast import (
    MODES,
    CombinationFit,
    ScreeningConfig,
    fit_combination,
    forecast_h,
    prepare,
    recursive_oos_evaluate,
    _screen,
)
from .inference import InferenceConfig
from .metrics import DMResult, dm_test, mase
from .models import ModelFailure, ModelSpec, build_density_matrix, parse_models
from .pool import PriorConfig

ENV_OUTPUT_DIR = "FEATPOOL_OUTPUT_DIR"
EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4


@dataclass
class RunConfig:
    """Every setting of a run. Defaults are the values listed here."""

    series: list = field(default_factory=lambda: ["synthetic:panel"])  # CSV paths or bundled names
    column: str = "value"  # value column in the CSV files
    id_column: Optional[str] = None  # long-format CSV: one series per id
    skip_invalid: bool = False  # drop unparsable rows instead of failing
    models: list = field(default_factory=lambda: ["naive", "rw_drift", "ets_aan", "ar"])
    modes: list = field(default_factory=lambda: ["SA", "OP", "FEBAMA"])
    k: int = 5  # features kept after ReliefF screening
    candidates: list = field(default_factory=lambda: list(FEATURE_NAMES))
    k_neighbors: int = 5
    min_length_s: int = 30
    feature_window: Optional[int] = None
    model_window: Optional[int] = None
    sigma2: float = 10.0  # prior variance; 10 for short panels, 1000 for returns
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    restarts: int = 2
    draws: int = 100
    burn_in: int = 50
    horizon: int = 18
    holdout: Optional[int] = None  # benchmark hold-out length (default: horizon)
    start_t: Optional[int] = None  # evaluate: first target index (default: 2/3 of the series)
    refit_models: bool = True  # refit component models on pseudo-observations
    fit: Optional[str] = None  # forecast: path to a fit JSON written by `train`
    seed: int = 0
    output_dir: str = "featpool_out"

    @classmethod
    def keys(cls) -> set:
        return {f.name for f in fields(cls)}

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        unknown = sorted(set(data) - cls.keys())
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        for name in ("series", "models", "modes", "candidates"):
            value = getattr(self, name)
            if isinstance(value, str):
                value = [v for v in value.split(",") if v]
                setattr(self, name, value)
            need(isinstance(value, list), name, "must be a list")
        need(len(self.series) > 0, "series", "at least one input is required")
        try:
            specs = parse_models(self.models)
        except ValueError as exc:
            raise ConfigError("models", str(exc)) from None
        need(len(specs) >= 1, "models", "at least one model is required")
        need(len({s.name for s in specs}) == len(specs), "models", "duplicate models")
        for mode in self.modes:
            need(mode in MODES, "modes", f"unknown mode {mode!r}; expected one of {MODES}")
        try:
            FeatureCatalog(tuple(self.candidates))
        except ValueError as exc:
            raise ConfigError("candidates", str(exc)) from None
        need(0 <= self.k <= len(self.candidates), "k",
             f"must be between 0 and the catalog size {len(self.candidates)}")
        need(self.k_neighbors >= 1, "k_neighbors", "must be >= 1")
        need(self.min_length_s >= 1, "min_length_s", "must be positive")
        for name in ("feature_window", "model_window", "holdout", "start_t"):
            v = getattr(self, name)
            need(v is None or v >= 1, name, "must be positive")
        need(self.horizon >= 1, "horizon", "must be >= 1")
        need(self.sigma2 > 0, "sigma2", "must be positive")
        try:
            spec = self.window()
        except ValueError as exc:
            raise ConfigError("feature_window", str(exc)) from None
        if self.k > 0 and any(m in ("FEBAMA", "FEBAMA_VS") for m in self.modes):
            try:
                spec.check_features(self.candidates)
            except ValueError as exc:
                raise ConfigError("candidates", str(exc)) from None
        for s in specs:
            avail = spec.min_length_s if spec.model_window is None else min(spec.min_length_s, spec.model_window)
            if s.window is not None:
                avail = min(avail, s.window)
            if s.anchor is not None:
                avail = s.anchor
            need(s.min_length <= avail, "min_length_s",
                 f"model {s.name} needs {s.min_length} observations of history")
        try:
            self.inference()
        except ValueError as exc:
            raise ConfigError("inference", str(exc)) from None

    def window(self) -> WindowSpec:
        return WindowSpec(self.min_length_s, self.feature_window, self.model_window)

    def inference(self) -> InferenceConfig:
        return InferenceConfig(self.max_iterations, self.gradient_tolerance, self.restarts,
                               self.draws, self.burn_in, self.seed)

    def screening(self) -> ScreeningConfig:
        return ScreeningConfig(tuple(self.candidates), self.k_neighbors)

    def prior(self) -> PriorConfig:
        return PriorConfig(self.sigma2)


# ----------------------------------------------------------------------------
# plumbing
# ----------------------------------------------------------------------------


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    data: dict = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"invalid YAML: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config", "top level must be a mapping")
        data.update(loaded)
    data.update({k: v for k, v in overrides.items() if v is not None})
    env_dir = os.environ.get(ENV_OUTPUT_DIR)
    if env_dir:
        data["output_dir"] = env_dir
    return RunConfig.from_mapping(data)


def load_inputs(cfg: RunConfig) -> list:
    out = []
    for src in cfg.series:
        if src in BUILTIN:
            out.extend(builtin(src, cfg.seed))
        elif cfg.id_column:
            out.extend(load_collection(src, cfg.column, cfg.id_column, skip_invalid=cfg.skip_invalid))
        else:
            out.append(load_series(src, cfg.column, skip_invalid=cfg.skip_invalid))
    return out


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


class Run:
    """Collects outputs and writes the manifest at the end of a subcommand."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command, self.cfg = command, cfg
        self.out = Path(cfg.output_dir)
        self.outputs: list = []
        self.t0 = time.perf_counter()

    def write(self, name: str, text: str) -> None:
        _atomic_write(self.out / name, text)
        self.outputs.append(name)

    def write_csv(self, name: str, header, rows) -> None:
        self.write(name, _csv_text(header, rows))

    def write_json(self, name: str, obj) -> None:
        self.write(name, json.dumps(obj, indent=2, sort_keys=False) + "\n")

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "config": asdict(self.cfg),
            "seed": self.cfg.seed,
            "versions": {
                "featpool": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "wall_time_seconds": round(time.perf_counter() - self.t0, 3),
            "outputs": self.outputs,
        }
        _atomic_write(self.out / f"manifest_{self.command}.json", json.dumps(manifest, indent=2) + "\n")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ModelFailure):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, (DataError, FeatpoolError)):
        return EXIT_DATA
    if isinstance(exc, (np.linalg.LinAlgError, FloatingPointError)):
        return EXIT_NUMERICAL
    return EXIT_DATA


def _report(exc: BaseException) -> int:
    code = _exit_code(exc)
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        err["field"] = exc.field
    if isinstance(exc, ModelFailure):
        err.update(t=exc.t, model=exc.model, cause=type(exc.cause).__name__)
    click.echo(json.dumps(err), err=True)
    return code


def _guarded(command: str, overrides: dict, config_path: Optional[str], body) -> None:
    try:
        cfg = load_config(config_path, overrides)
        run = Run(command, cfg)
        body(run, cfg)
        run.finish()
    except (FeatpoolError, ModelFailure, ValueError, np.linalg.LinAlgError) as exc:
        sys.exit(_report(exc))


# ----------------------------------------------------------------------------
# subcommand bodies
# ----------------------------------------------------------------------------


def _train_one(cfg: RunConfig, data, mode: str) -> CombinationFit:
    use = mode in ("FEBAMA", "FEBAMA_VS") and cfg.k > 0
    catalog, ranking = _screen(data, cfg.k, cfg.screening(), cfg.seed) if use else ((), [])
    return fit_combination(data, mode, cfg.prior(), cfg.inference(), catalog, ranking)


def _needs_features(cfg: RunConfig) -> bool:
    return cfg.k > 0 and any(m in ("FEBAMA", "FEBAMA_VS") for m in cfg.modes)


def do_features(run: Run, cfg: RunConfig) -> None:
    spec = cfg.window()
    for ts in load_inputs(cfg):
        fm = build_feature_matrix(ts, FeatureCatalog(tuple(cfg.candidates)), spec)
        rows = [[int(t), *row] for t, row in zip(fm.target_indices, fm.values.tolist())]
        run.write_csv(f"features_{ts.id}.csv", ["t", *fm.names], rows)


def do_fit_models(run: Run, cfg: RunConfig) -> None:
    spec = cfg.window()
    for ts in load_inputs(cfg):
        dm = build_density_matrix(ts, cfg.models, spec)
        rows = []
        for r, t in enumerate(dm.target_indices):
            for i, name in enumerate(dm.model_names):
                rows.append([int(t), name, dm.means[r, i], dm.sds[r, i], dm.log_densities[r, i]])
        run.write_csv(f"densities_{ts.id}.csv", ["t", "model", "mean", "sd", "log_density"], rows)


def do_train(run: Run, cfg: RunConfig) -> None:
    for ts in load_inputs(cfg):
        data = prepare(ts, cfg.models, cfg.window(), cfg.candidates if _needs_features(cfg) else ())
        for mode in cfg.modes:
            fit = _train_one(cfg, data, mode)
            doc = fit.to_dict()
            doc.update(series=ts.id, seed=cfg.seed, inference=asdict(cfg.inference()))
            run.write_json(f"fit_{ts.id}_{mode}.json", doc)


def do_forecast(run: Run, cfg: RunConfig) -> None:
    if cfg.fit is None:
        raise ConfigError("fit", "forecast needs the path of a fit JSON written by `train`")
    try:
        with open(cfg.fit, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read fit {cfg.fit}: {exc}") from None
    fit = CombinationFit.from_dict(doc)
    inputs = load_inputs(cfg)
    wanted = doc.get("series")
    matches = [ts for ts in inputs if ts.id == wanted] or inputs[:1]
    ts = matches[0]
    res = forecast_h(fit, ts, cfg.horizon, refit=cfg.refit_models)
    stem = f"{ts.id}_{fit.mode}"
    run.write_json(f"forecast_{stem}.json", {"series": ts.id, "mode": fit.mode, **res.to_dict()})
    rows = [[h + 1, name, res.weights[h, i]] for h in range(res.horizon) for i, name in enumerate(res.model_names)]
    run.write_csv(f"weights_{stem}.csv", ["t_or_h", "model", "weight"], rows)


def do_evaluate(run: Run, cfg: RunConfig) -> None:
    score_rows, dm_rows = [], []
    for ts in load_inputs(cfg):
        T = len(ts)
        start = cfg.start_t if cfg.start_t is not None else max(cfg.min_length_s + 2, (2 * T) // 3)
        res = recursive_oos_evaluate(ts, cfg.models, cfg.window(), cfg.prior(), cfg.modes, cfg.inference(),
                                     start, cfg.k if _needs_features(cfg) else 0, cfg.screening())
        train = ts.values[:start]
        for mode, tr in res.tracks.items():
            score_rows.append([ts.id, mode, tr.average_ls, mase(train, res.actuals, tr.points)])
        point_rows = []
        for mode, tr in res.tracks.items():
            for t, ls, p, w in zip(tr.target_indices, tr.log_scores, tr.points, tr.weights):
                point_rows.append([int(t), mode, ts.values[t], p, ls, ";".join(repr(float(x)) for x in w)])
        run.write_csv(f"oos_points_{ts.id}.csv", ["t", "mode", "actual", "point", "log_score", "weights"], point_rows)
        modes = list(res.tracks)
        for a, b in itertools.combinations(modes, 2):
            ta, tb = res.tracks[a], res.tracks[b]
            if len(ta.log_scores) < 10:
                continue
            for loss, la, lb in (("log_score", -ta.log_scores, -tb.log_scores),
                                 ("abs_error", np.abs(res.actuals - ta.points), np.abs(res.actuals - tb.points))):
                d: DMResult = dm_test(la, lb, 1)
                dm_rows.append([ts.id, a, b, loss, d.statistic, d.p_value, int(d.degenerate)])
    run.write_csv("scores.csv", ["series", "mode", "LS", "MASE"], score_rows)
    run.write_csv("dm_tests.csv", ["series", "mode_a", "mode_b", "loss", "statistic", "p_value", "degenerate"], dm_rows)


def model_subsets(models: list) -> list:
    """Every subset with at least two models, ordered by size then position."""
    return [list(c) for r in range(2, len(models) + 1) for c in itertools.combinations(models, r)]


def do_benchmark(run: Run, cfg: RunConfig) -> None:
    specs = parse_models(cfg.models)
    if len(specs) < 2:
        raise ConfigError("models", "benchmark needs at least two models")
    H = cfg.holdout or cfg.horizon
    subsets = model_subsets(list(range(len(specs))))
    results: dict = {}
    indiv_rows = []
    for ts in load_inputs(cfg):
        T = len(ts)
        if T - H <= cfg.min_length_s + 1:
            raise DataError(f"series {ts.id} is too short for a hold-out of {H}")
        train, test = ts.head(T - H), ts.values[T - H :]
        data = prepare(train, specs, cfg.window(), cfg.candidates if _needs_features(cfg) else ())
        for i, s in enumerate(specs):
            dens = s.predict(train.values, H)
            mean = np.array([d.mean for d in dens])
            sd = np.array([d.sd for d in dens])
            ls = -0.5 * ((test - mean) / sd) ** 2 - np.log(sd) - 0.5 * np.log(2 * np.pi)
            indiv_rows.append([ts.id, s.name, float(np.mean(ls)), mase(train.values, test, mean)])
        for sub in subsets:
            sub_data = type(data)(train, data.density.columns(sub), data.features, [specs[i] for i in sub], data.spec)
            for mode in cfg.modes:
                fit = _train_one(cfg, sub_data, mode)
                fc = forecast_h(fit, train, H, refit=cfg.refit_models)
                results.setdefault(tuple(sub), {}).setdefault(mode, []).append(
                    (float(np.mean(fc.logpdf(test))), mase(train.values, test, fc.points))
                )
    header = ["models"] + [f"{mode}_{metric}" for mode in cfg.modes for metric in ("LS", "MASE")]
    rows = []
    for sub in subsets:
        row = ["+".join(specs[i].name for i in sub)]
        for mode in cfg.modes:
            vals = np.array(results[tuple(sub)][mode])
            row += [float(vals[:, 0].mean()), float(vals[:, 1].mean())]
        rows.append(row)
    run.write_csv("benchmark.csv", header, rows)
    run.write_csv("individual_models.csv", ["series", "model", "LS", "MASE"], indiv_rows)


# ----------------------------------------------------------------------------
# click wiring
# ----------------------------------------------------------------------------


def _common(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(), help="YAML run configuration."),
        click.option("--series", help="Comma-separated CSV paths or bundled names (synthetic:panel, synthetic:regime)."),
        click.option("--column", help="Value column name."),
        click.option("--id-column", help="Series id column for long-format CSV."),
        click.option("--skip-invalid/--no-skip-invalid", default=None, help="Drop unparsable rows."),
        click.option("--models", help="Comma-separated model specs, e.g. naive,ar:max_order=3,garch11."),
        click.option("--modes", help="Comma-separated modes: SA,OP,FEBAMA,FEBAMA_VS."),
        click.option("--k", type=int, help="Number of screened features."),
        click.option("--min-length-s", type=int),
        click.option("--feature-window", type=int),
        click.option("--model-window", type=int),
        click.option("--sigma2", type=float),
        click.option("--horizon", type=int),
        click.option("--draws", type=int),
        click.option("--burn-in", type=int),
        click.option("--restarts", type=int),
        click.option("--start-t", type=int),
        click.option("--fit", help="Fit JSON for `forecast`."),
        click.option("--seed", type=int),
        click.option("--output-dir", help=f"Output directory (overridden by ${ENV_OUTPUT_DIR})."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _overrides(kw: dict) -> dict:
    return {k: v for k, v in kw.items() if k != "config_path"}


@click.group()
@click.version_option(__version__)
def main():
    """Feature-based Bayesian forecast combination."""


def _make(name: str, body, help_text: str):
    @main.command(name=name, help=help_text)
    @_common
    def cmd(**kw):
        _guarded(name, _overrides(kw), kw.get("config_path"), body)

    return cmd


_make("features", do_features, "Write the raw feature matrix of every series.")
_make("fit-models", do_fit_models, "Write the one-step density matrix of every series.")
_make("train", do_train, "Train each mode and write one fit JSON per series and mode.")
_make("forecast", do_forecast, "Forecast h = 1..horizon from a trained fit.")
_make("evaluate", do_evaluate, "Recursive one-step out-of-sample evaluation of every mode.")
_make("benchmark", do_benchmark, "Hold-out evaluation over every multi-model subset of the pool.")


if __name__ == "__main__":
    main()
