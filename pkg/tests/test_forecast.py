import hashlib
import json

import numpy as np
import pytest

from featpool.core import TimeSeries, WindowSpec
from featpool.datasets import short_panel
from featpool.errors import InsufficientHistory
from featpool.features import FeatureCatalog, compute_features
from featpool.forecast import (
    CombinationFit,
    forecast_h,
    prepare,
    recursive_oos_evaluate,
    train_pipeline,
)
from featpool.inference import InferenceConfig
from featpool.models import parse_models
from featpool.pool import PriorConfig

POOL = ["naive", "rw_drift", "ets_aan", "ar"]
FAST = InferenceConfig(restarts=0, draws=20, burn_in=5)


@pytest.fixture(scope="module")
def series():
    return short_panel(seed=0, n_series=1, length=60)[0]


@pytest.fixture(scope="module")
def febama(series):
    return train_pipeline(series, POOL, WindowSpec(30), PriorConfig(), "FEBAMA", 3, FAST)


def _digest(a):
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


def reexecute(fit, y, H):
    """Straight re-execution of the recursive scheme with plain numpy."""
    y = list(y)
    out_w, out_p = [], []
    cat = FeatureCatalog(fit.catalog)
    for _ in range(H):
        means = [spec.predict(np.array(y), 1)[0].mean for spec in fit.models]
        raw = compute_features(np.array(y), cat).values
        x = (raw - fit.stats.mean) / fit.stats.sd
        x[fit.stats.constant] = 0.0
        eta = np.concatenate([fit.beta[:, 0] + fit.beta[:, 1:] @ x, [0.0]])
        w = np.exp(eta - eta.max())
        w /= w.sum()
        out_w.append(w)
        out_p.append(float(w @ means))
        y.append(out_p[-1])
    return np.array(out_w), np.array(out_p)


class TestTraining:
    def test_sa_quarter_weights(self, series):
        fit = train_pipeline(series, POOL, WindowSpec(30), PriorConfig(), "SA", 0)
        res = forecast_h(fit, series, 5)
        assert np.all(res.weights == 0.25)

    def test_op_constant_weights(self, series):
        fit = train_pipeline(series, POOL, WindowSpec(30), PriorConfig(), "OP", 0, FAST)
        res = forecast_h(fit, series, 10)
        assert np.max(np.abs(res.weights - res.weights[0])) < 1e-12
        assert fit.beta.shape == (3, 1)

    def test_febama_nests_op(self, series):
        data = prepare(series, POOL, WindowSpec(30), ("x_acf1", "entropy", "trend"))
        op = train_pipeline(series, POOL, WindowSpec(30), PriorConfig(), "OP", 0, FAST, data=data)
        fb = train_pipeline(series, POOL, WindowSpec(30), PriorConfig(), "FEBAMA", 3, FAST, data=data)
        assert fb.in_sample_ls >= op.in_sample_ls - 1e-6

    def test_too_short(self):
        with pytest.raises(InsufficientHistory):
            train_pipeline(np.arange(31.0), ["naive", "ar"], WindowSpec(30), PriorConfig(), "OP", 0)

    def test_unknown_mode(self, series):
        with pytest.raises(ValueError):
            train_pipeline(series, POOL, WindowSpec(30), PriorConfig(), "GP", 0)


class TestForecast:
    def test_naive_only(self, series):
        fit = train_pipeline(series, ["naive"], WindowSpec(30), PriorConfig(), "OP", 0)
        res = forecast_h(fit, series, 18)
        np.testing.assert_array_equal(res.points, np.full(18, series.values[-1]))
        np.testing.assert_array_equal(res.weights, np.ones((18, 1)))

    def test_identical_models_density(self, series):
        fit = train_pipeline(series, ["ar", "ar:max_order=5"], WindowSpec(30), PriorConfig(), "OP", 0, FAST)
        res = forecast_h(fit, series, 4)
        y = res.means[:, 0] + 0.7 * res.sds[:, 0]
        single = -0.5 * 0.49 - np.log(res.sds[:, 0]) - 0.5 * np.log(2 * np.pi)
        np.testing.assert_allclose(res.logpdf(y), single, atol=1e-12)

    def test_h18_matches_reexecution(self, series, febama):
        res = forecast_h(febama, series, 18)
        np.testing.assert_allclose(res.weights.sum(axis=1), 1, atol=1e-12)
        assert np.all(res.weights >= 0)
        w, p = reexecute(febama, series.values, 18)
        np.testing.assert_allclose(res.weights, w, atol=1e-10)
        np.testing.assert_allclose(res.points, p, atol=1e-9)

    def test_vs_weights_mean_of_draws(self, series):
        fit = train_pipeline(series, POOL, WindowSpec(30), PriorConfig(), "FEBAMA_VS", 2, FAST)
        assert len(fit.draws) == 20
        res = forecast_h(fit, series, 3)
        np.testing.assert_allclose(res.weights.sum(axis=1), 1, atol=1e-12)

    def test_deterministic_and_no_mutation(self, series, febama):
        before = _digest(series.values)
        raw = np.array(series.values)
        a = forecast_h(febama, series, 6)
        b = forecast_h(febama, raw, 6)
        assert _digest(series.values) == before
        assert _digest(raw) == before
        np.testing.assert_array_equal(a.points, b.points)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_frozen_models(self, series, febama):
        res = forecast_h(febama, series, 5, refit=False)
        expected = [d.mean for d in febama.models[0].predict(series.values, 5)]
        np.testing.assert_allclose(res.means[:, 0], expected)

    def test_weight_continuity(self, febama):
        # a first-order change: shrinking the perturbation tenfold shrinks the response tenfold
        rng = np.random.default_rng(0)
        n = len(febama.catalog)
        for _ in range(100):
            raw = febama.stats.mean + febama.stats.sd * rng.normal(size=n)
            j = rng.integers(n)
            e = np.zeros(n)
            e[j] = 1e-5
            base = febama.weights_for(raw)[0]
            d1 = np.abs(febama.weights_for(raw + e)[0] - base).max()
            d2 = np.abs(febama.weights_for(raw + e / 10)[0] - base).max()
            assert d1 < 1e-3
            if d1 > 1e-12:
                assert abs(d1 / d2 - 10) < 0.1

    def test_json_round_trip(self, series, febama):
        back = CombinationFit.from_dict(json.loads(json.dumps(febama.to_dict())))
        np.testing.assert_array_equal(forecast_h(back, series, 4).weights, forecast_h(febama, series, 4).weights)


class TestOos:
    def test_sa_equals_definition(self, series):
        data = prepare(series, POOL, WindowSpec(30))
        res = recursive_oos_evaluate(series, POOL, WindowSpec(30), PriorConfig(), ["SA"], start_t=45, data=data)
        rows = data.density.target_indices >= 45
        ld = data.density.log_densities[rows]
        expected = np.mean(np.log(np.exp(ld).mean(axis=1)))
        assert abs(res.tracks["SA"].average_ls - expected) < 1e-12

    def test_febama_k0_equals_op(self, series):
        res = recursive_oos_evaluate(series, POOL, WindowSpec(30), PriorConfig(), ["OP", "FEBAMA"], FAST,
                                     start_t=50, k=0)
        op, fb = res.tracks["OP"], res.tracks["FEBAMA"]
        np.testing.assert_allclose(fb.log_scores, op.log_scores, atol=1e-9)
        np.testing.assert_allclose(fb.weights, op.weights, atol=1e-9)

    def test_no_look_ahead(self, series):
        # changing y_t onwards cannot change the density issued for y_t
        y = np.array(series.values)
        a = recursive_oos_evaluate(y, POOL, WindowSpec(30), PriorConfig(), ["FEBAMA"], FAST, start_t=50,
                                   catalog=("x_acf1", "trend"))
        z = y.copy()
        z[55:] += 100.0
        b = recursive_oos_evaluate(z, POOL, WindowSpec(30), PriorConfig(), ["FEBAMA"], FAST, start_t=50,
                                   catalog=("x_acf1", "trend"))
        np.testing.assert_array_equal(a.tracks["FEBAMA"].weights[:6], b.tracks["FEBAMA"].weights[:6])
        np.testing.assert_array_equal(a.tracks["FEBAMA"].points[:6], b.tracks["FEBAMA"].points[:6])

    def test_start_validation(self, series):
        with pytest.raises(ValueError):
            recursive_oos_evaluate(series, POOL, WindowSpec(30), PriorConfig(), ["SA"], start_t=31)


def test_prepare_accepts_arrays():
    data = prepare(np.random.default_rng(0).normal(size=40), parse_models(["naive", "ar"]), WindowSpec(30))
    assert isinstance(data.series, TimeSeries)
    assert data.density.log_densities.shape == (10, 2)
