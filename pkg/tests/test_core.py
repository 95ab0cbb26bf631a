import numpy as np
import pytest

from featpool.core import (
    FeatureMatrix,
    TimeSeries,
    WindowSpec,
    history_slices,
    load_collection,
    load_series,
    standardize,
)
from featpool.errors import DataError, EmptySeries, InsufficientHistory, NonNumeric


def _csv(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadSeries:
    def test_direct_parse(self, tmp_path):
        ts = load_series(_csv(tmp_path, "v\n1\n2\n3\n"), "v")
        np.testing.assert_array_equal(ts.values, [1.0, 2.0, 3.0])
        assert ts.skipped_rows == 0

    def test_header_only(self, tmp_path):
        with pytest.raises(EmptySeries):
            load_series(_csv(tmp_path, "v\n"), "v")

    def test_non_numeric_row(self, tmp_path):
        with pytest.raises(NonNumeric) as info:
            load_series(_csv(tmp_path, "v\n1\nx\n3\n"), "v")
        assert info.value.row == 2

    def test_skip_invalid_counts_rows(self, tmp_path):
        ts = load_series(_csv(tmp_path, "v\n1\nx\n3\nnan\n"), "v", skip_invalid=True)
        np.testing.assert_array_equal(ts.values, [1.0, 3.0])
        assert ts.skipped_rows == 2

    def test_missing_file_and_column(self, tmp_path):
        with pytest.raises(DataError):
            load_series(tmp_path / "nope.csv", "v")
        with pytest.raises(DataError):
            load_series(_csv(tmp_path, "v\n1\n"), "w")

    def test_long_format(self, tmp_path):
        p = _csv(tmp_path, "id,v\nb,1\na,2\nb,3\n")
        out = load_collection(p, "v", "id")
        assert [s.id for s in out] == ["b", "a"]
        np.testing.assert_array_equal(out[0].values, [1.0, 3.0])


class TestTimeSeries:
    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            TimeSeries("x", [1.0, np.nan])
        with pytest.raises(EmptySeries):
            TimeSeries("x", [])

    def test_extended_leaves_original(self):
        ts = TimeSeries("x", [1.0, 2.0])
        ext = ts.extended(5.0)
        np.testing.assert_array_equal(ts.values, [1.0, 2.0])
        np.testing.assert_array_equal(ext.values, [1.0, 2.0, 5.0])
        with pytest.raises(ValueError):
            ts.values[0] = 3.0


class TestHistorySlices:
    def test_all_history(self):
        ts = TimeSeries("x", np.arange(30.0))
        out = list(history_slices(ts, WindowSpec(25)))
        assert [t for t, _ in out] == list(range(25, 30))
        assert [h.size for _, h in out] == [25, 26, 27, 28, 29]

    def test_feature_window(self):
        ts = TimeSeries("x", np.arange(30.0))
        out = list(history_slices(ts, WindowSpec(25, feature_window=10)))
        assert len(out) == 5
        assert all(h.size == 10 for _, h in out)
        t, h = out[-1]
        np.testing.assert_array_equal(h, np.arange(19.0, 29.0))

    def test_too_short(self):
        with pytest.raises(InsufficientHistory):
            list(history_slices(TimeSeries("x", np.arange(25.0)), WindowSpec(25)))

    def test_no_look_ahead(self):
        y = np.arange(40.0)
        for t, h in history_slices(TimeSeries("x", y), WindowSpec(25)):
            assert h.max() < y[t]

    def test_window_validation(self):
        with pytest.raises(ValueError):
            WindowSpec(10, feature_window=20)
        with pytest.raises(ValueError):
            WindowSpec(20).check_features(["diff2_acf10"])
        WindowSpec(25).check_features(["diff2_acf10"])


def _fm(cols):
    X = np.column_stack(cols).astype(float)
    return FeatureMatrix(X, tuple(f"f{i}" for i in range(X.shape[1])), np.arange(X.shape[0]))


class TestStandardize:
    def test_examples(self):
        out, stats = standardize(_fm([[1, 2, 3], [5, 5, 5]]))
        np.testing.assert_allclose(out.values[:, 0], [-1, 0, 1], atol=1e-15)
        np.testing.assert_array_equal(out.values[:, 1], [0, 0, 0])
        assert stats.mean[0] == 2 and stats.sd[0] == 1
        assert stats.constant.tolist() == [False, True]

    def test_two_rows(self):
        out, _ = standardize(_fm([[0, 4]]))
        np.testing.assert_allclose(out.values[:, 0], [-0.70710678, 0.70710678], atol=1e-8)

    def test_needs_two_rows(self):
        with pytest.raises(DataError):
            standardize(_fm([[1.0]]))

    def test_idempotent_and_stats_reproduce(self):
        rng = np.random.default_rng(0)
        fm = _fm([rng.normal(3, 2, 50), rng.exponential(1, 50)])
        once, stats = standardize(fm)
        twice, _ = standardize(once)
        np.testing.assert_allclose(twice.values, once.values, atol=1e-12)
        np.testing.assert_array_equal(stats.apply(fm.values), once.values)
        np.testing.assert_allclose(once.values.mean(0), 0, atol=1e-12)
        np.testing.assert_allclose(once.values.std(0, ddof=1), 1, atol=1e-12)

    def test_stats_round_trip(self):
        _, stats = standardize(_fm([[1, 2, 4]]))
        back = type(stats).from_dict(stats.to_dict())
        np.testing.assert_array_equal(back.sd, stats.sd)
