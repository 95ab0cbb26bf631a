"""Series container, CSV ingestion, history windowing and feature standardization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import DataError, EmptySeries, InsufficientHistory, NonNumeric

# Features that need at least 25 observations (lag-10 ACF of the twice-differenced
# series plus the 12-lag ARCH regression).
LONG_HISTORY_FEATURES = frozenset(
    {"diff2_acf1", "diff2_acf10", "arch_r2", "garch_r2", "garch_acf"}
)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """An ordered, finite, univariate series.

    ``period`` is the seasonal period (1 for nonseasonal data). ``skipped_rows``
    records how many input rows were dropped at load time.
    """

    id: str
    values: np.ndarray
    period: int = 1
    skipped_rows: int = 0

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim != 1:
            raise DataError("series values must be one-dimensional")
        if arr.size == 0:
            raise EmptySeries(f"series {self.id!r} is empty")
        if not np.all(np.isfinite(arr)):
            raise DataError(f"series {self.id!r} contains non-finite values")
        if int(self.period) < 1:
            raise DataError("period must be >= 1")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    def extended(self, value: float) -> "TimeSeries":
        """Return a new series with ``value`` appended (the original is untouched)."""
        return TimeSeries(self.id, np.append(self.values, value), self.period)

    def head(self, n: int) -> "TimeSeries":
        return TimeSeries(self.id, self.values[:n], self.period)


@dataclass(frozen=True)
class WindowSpec:
    """History requirements for recursive feature and density computation.

    ``feature_window`` and ``model_window`` of ``None`` mean "use all history".
    """

    min_length_s: int
    feature_window: Optional[int] = None
    model_window: Optional[int] = None

    def __post_init__(self):
        if self.min_length_s < 1:
            raise ValueError("min_length_s must be positive")
        for name in ("feature_window", "model_window"):
            w = getattr(self, name)
            if w is not None and w < 1:
                raise ValueError(f"{name} must be positive or None")
        if self.feature_window is not None and self.feature_window > self.min_length_s:
            raise ValueError("feature_window must not exceed min_length_s")

    def check_features(self, names: Sequence[str]) -> None:
        needs_long = LONG_HISTORY_FEATURES.intersection(names)
        effective = self.min_length_s if self.feature_window is None else self.feature_window
        if needs_long and effective < 25:
            raise ValueError(
                f"features {sorted(needs_long)} need at least 25 observations of history"
            )


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    sd: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.sd == 0

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        scale = np.where(self.constant, 1.0, self.sd)
        out = (values - self.mean) / scale
        return np.where(self.constant, 0.0, out)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["sd"], dtype=float))


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows, one per target index, in catalog column order."""

    values: np.ndarray
    names: tuple
    target_indices: np.ndarray
    flags: tuple = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            values = values.reshape(len(self.target_indices), len(self.names))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "target_indices", np.asarray(self.target_indices, dtype=int))
        if values.shape != (len(self.target_indices), len(self.names)):
            raise ValueError("feature matrix shape does not match names / indices")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        cols = [self.names.index(n) for n in names]
        return FeatureMatrix(self.values[:, cols], tuple(names), self.target_indices, self.flags)

    def rows(self, mask) -> "FeatureMatrix":
        return FeatureMatrix(self.values[mask], self.names, self.target_indices[mask], self.flags)

    def with_values(self, values: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(values, self.names, self.target_indices, self.flags)


def _parse_float(cell: str, row: int) -> float:
    try:
        x = float(cell)
    except ValueError:
        raise NonNumeric(row, cell) from None
    if not math.isfinite(x):
        raise NonNumeric(row, cell)
    return x


def load_series(
    path,
    column: str,
    *,
    skip_invalid: bool = False,
    period: int = 1,
    series_id: Optional[str] = None,
) -> TimeSeries:
    """Read one value column of a CSV file into a :class:`TimeSeries`.

    Rows are data rows numbered from 1 (the header is not counted). Without
    ``skip_invalid`` any unparsable cell raises :class:`NonNumeric`.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    values = []
    skipped = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise DataError(f"column {column!r} not found in {path}")
        for i, rec in enumerate(reader, start=1):
            cell = (rec.get(column) or "").strip()
            try:
                values.append(_parse_float(cell, i))
            except NonNumeric:
                if not skip_invalid:
                    raise
                skipped += 1
    if not values:
        raise EmptySeries(f"no data rows in {path}")
    return TimeSeries(series_id or path.stem, values, period, skipped)


def load_collection(
    path, column: str, id_column: str, *, skip_invalid: bool = False, period: int = 1
) -> list:
    """Read a long-format CSV (one id column, one value column) into several series.

    Series are returned in order of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    groups: dict = {}
    skipped: dict = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for name in (column, id_column):
            if reader.fieldnames is None or name not in reader.fieldnames:
                raise DataError(f"column {name!r} not found in {path}")
        for i, rec in enumerate(reader, start=1):
            sid = rec[id_column]
            groups.setdefault(sid, [])
            skipped.setdefault(sid, 0)
            try:
                groups[sid].append(_parse_float((rec[column] or "").strip(), i))
            except NonNumeric:
                if not skip_invalid:
                    raise
                skipped[sid] += 1
    if not groups:
        raise EmptySeries(f"no data rows in {path}")
    return [TimeSeries(sid, vals, period, skipped[sid]) for sid, vals in groups.items()]


def history_slices(series: TimeSeries, spec: WindowSpec) -> Iterator:
    """Yield ``(t, history)`` for every target index ``t = s, ..., T-1`` (0-based).

    ``history`` holds only ``values[:t]``, cut to the last ``feature_window``
    values when a window is set.
    """
    T = len(series)
    s = spec.min_length_s
    if T <= s:
        raise InsufficientHistory(f"series length {T} must exceed min_length_s={s}")
    y = series.values
    w = spec.feature_window
    for t in range(s, T):
        lo = 0 if w is None else max(0, t - w)
        yield t, y[lo:t]


def standardize(matrix: FeatureMatrix):
    """Scale each column to sample mean 0 and sd 1 (n-1 divisor).

    Constant columns map to zeros and are flagged through ``stats.constant``.
    """
    X = matrix.values
    if X.shape[0] < 2:
        raise DataError("standardization needs at least 2 rows")
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    # exact-arithmetic constants can leave rounding noise in the sd
    sd = np.where(sd <= 1e-14 * np.maximum(1.0, np.abs(mean)), 0.0, sd)
    stats = StandardizationStats(mean, sd)
    return matrix.with_values(stats.apply(X)), stats
