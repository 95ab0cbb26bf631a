"""Acceptance criteria. Each check prints one PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
from click.testing import CliRunner
from scipy import stats

from featpool.cli import main
from featpool.core import TimeSeries, WindowSpec
from featpool.datasets import regime_switching
from featpool.features import crossing_points, spectral_entropy, unitroot_kpss, x_acf1
from featpool.forecast import (
    ScreeningConfig,
    fit_combination,
    forecast_h,
    prepare,
    recursive_oos_evaluate,
    train_pipeline,
)
from featpool.inference import InferenceConfig, gibbs_select, selection_frequencies
from featpool.metrics import dm_test, mase
from featpool.pool import (
    PriorConfig,
    combination_weights,
    design_matrix,
    grad_log_posterior,
    log_posterior,
    log_weights,
)

# ----------------------------------------------------------------------------
# criteria
# ----------------------------------------------------------------------------


def criterion_1():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst, inside = 0.0, True
    for _ in range(10_000):
        m = int(rng.integers(2, 6))
        n = int(rng.integers(0, 6))
        beta = rng.normal(0, 2, size=(m - 1, n + 1))
        x = np.concatenate([[1.0], rng.normal(size=n)])
        w = combination_weights(x, beta)
        worst = max(worst, abs(w.sum() - 1))
        inside &= bool(np.all((w > 0) & (w < 1)))
    dt = time.perf_counter() - t0
    return worst <= 1e-12 and inside and dt < 5, f"max |sum-1| = {worst:.1e}, all in (0,1): {inside}, {dt:.2f}s"


def _regime_data(seed):
    ts = regime_switching(seed)
    spec = WindowSpec(50, feature_window=50)
    return prepare(ts, ["ar:max_order=0:anchor=50", "garch11"], spec, ("arch_acf", "x_acf1")), spec


def criterion_2():
    data, _ = _regime_data(0)
    fit = fit_combination(data, "FEBAMA", PriorConfig(1000.0), InferenceConfig(), catalog=())
    n_rows = data.density.log_densities.shape[0]
    w = fit.weights_for(np.zeros((n_rows, 0)))
    dev = float(np.max(np.abs(w - w[0])))
    fc = forecast_h(fit, data.series, 18)
    dev = max(dev, float(np.max(np.abs(fc.weights - fc.weights[0]))))
    return dev < 1e-12, f"max deviation over t = {dev:.1e}"


def criterion_3():
    rng = np.random.default_rng(3)
    e = rng.normal(size=500)
    y = np.empty(500)
    y[0] = e[0]
    for t in range(1, 500):
        y[t] = 0.6 * y[t - 1] + e[t] * (1 + 0.5 * (t > 250))
    spec = WindowSpec(30)
    prior = PriorConfig(10.0)
    t0 = time.perf_counter()
    data = prepare(TimeSeries("ar", y), ["naive", "rw_drift", "ar"], spec, ("x_acf1", "arch_acf", "entropy", "trend"))
    fb = train_pipeline(data.series, data.models, spec, prior, "FEBAMA", 4,
                        screening=ScreeningConfig(candidates=data.features.names), data=data)
    op = fit_combination(data, "OP", prior)
    embedded = np.column_stack([op.beta, np.zeros((2, len(fb.catalog)))])
    x = data.features.select(fb.catalog)
    xs = fb.stats.apply(x.values)
    at_op = log_posterior(embedded, None, data.density.log_densities, xs, prior)
    dt = time.perf_counter() - t0
    gap = fb.log_posterior - at_op
    return gap >= -1e-6 and dt < 30, f"FEBAMA - embedded OP = {gap:.4f}, {dt:.1f}s"


def _regime_seed(seed):
    data, spec = _regime_data(seed)
    prior = PriorConfig(1000.0)
    cat = ("arch_acf", "x_acf1")
    fits = {m: fit_combination(data, m, prior, InferenceConfig(), cat) for m in ("SA", "OP", "FEBAMA")}
    ls = {m: f.in_sample_ls for m, f in fits.items()}
    a = ls["FEBAMA"] > ls["OP"] > ls["SA"]
    oos = recursive_oos_evaluate(data.series, data.models, spec, prior, ("SA", "FEBAMA"), start_t=300,
                                 data=data, catalog=cat)
    gain = oos.tracks["FEBAMA"].average_ls - oos.tracks["SA"].average_ls
    b = gain >= 0.01
    w = fits["FEBAMA"].weights_for(data.features.values)
    ld = data.density.log_densities
    regime = data.density.target_indices // 150
    on_better = []
    for r in np.unique(regime):
        rows = regime == r
        better = int(np.argmax(ld[rows].mean(axis=0)))
        on_better.append(float(w[rows, better].mean()))
    c = min(on_better) > 0.6
    return a, b, c, gain, on_better


def criterion_4(seeds=range(20)):
    t0 = time.perf_counter()
    counts = np.zeros(3, int)
    c_seeds = []
    for seed in seeds:
        a, b, c, gain, on_better = _regime_seed(seed)
        counts += [a, b, c]
        if c:
            c_seeds.append(seed)
    dt = time.perf_counter() - t0
    need = math.ceil(0.9 * len(seeds))
    ok = bool(np.all(counts >= need)) and dt < 300
    return ok, f"(a) {counts[0]}/{len(seeds)}, (b) {counts[1]}/{len(seeds)}, (c) {counts[2]}/{len(seeds)} (seeds {c_seeds}), {dt:.0f}s"


def _vs_instance(seed, T=300):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(T, 5))
    X = (X - X.mean(0)) / X.std(0, ddof=1)
    beta = np.array([[0.0, 2.0, 0.0, 0.0, 0.0, 0.0]])
    w = np.exp(log_weights(design_matrix(X), beta))
    comp = (rng.random(T) >= w[:, 0]).astype(int)
    sd = np.array([1.0, 3.0])
    y = rng.normal(size=T) * sd[comp]
    ld = -0.5 * (y[:, None] / sd) ** 2 - np.log(sd) - 0.5 * np.log(2 * np.pi)
    return ld, X


def criterion_5(seeds=range(20)):
    t0 = time.perf_counter()
    hits = 0
    for seed in seeds:
        ld, X = _vs_instance(seed)
        run = gibbs_select(ld, X, PriorConfig(10.0), InferenceConfig(draws=200, burn_in=50, seed=seed))
        f = selection_frequencies(run.draws)[0]
        hits += bool(f[0] > np.max(f[1:]))
    dt = time.perf_counter() - t0
    return hits >= 18 and dt < 600, f"true feature first in {hits}/{len(seeds)} seeds, {dt:.0f}s"


def criterion_6():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        m, n, T = int(rng.integers(2, 5)), int(rng.integers(1, 4)), 40
        logp = rng.normal(-1.5, 1, size=(T, m))
        X = rng.normal(size=(T, n))
        beta = rng.normal(0, 0.7, size=(m - 1, n + 1))
        prior = PriorConfig(2.0)
        g = grad_log_posterior(beta, None, logp, X, prior)
        for idx in np.ndindex(beta.shape):
            e = np.zeros_like(beta)
            e[idx] = 1e-6
            fd = (log_posterior(beta + e, None, logp, X, prior) - log_posterior(beta - e, None, logp, X, prior)) / 2e-6
            worst = max(worst, abs(fd - g[idx]) / max(1.0, abs(g[idx])))
    return worst < 1e-5, f"max relative error = {worst:.1e}"


def _dm_direct(a, b):
    d = [x - y for x, y in zip(a, b)]
    n = len(d)
    dbar = sum(d) / n
    g0 = sum((v - dbar) ** 2 for v in d) / n
    s = dbar / math.sqrt(g0 / n) * math.sqrt((n + 1 - 2 + 0) / n)
    return s, 2 * stats.t.sf(abs(s), n - 1)


def criterion_7():
    m = mase([1, 2, 3, 4], [5, 7], [5, 6])
    rng = np.random.default_rng(13)
    a, b = rng.normal(1.0, 1, 100) ** 2, rng.normal(0.8, 1, 100) ** 2
    res = dm_test(a, b, 1)
    s, p = _dm_direct(a.tolist(), b.tolist())
    err = max(abs(res.statistic - s), abs(res.p_value - p))
    same = dm_test(a, a.copy())
    ok = m == 0.5 and err < 1e-6 and same.p_value == 1.0
    return ok, f"MASE = {m}, DM oracle error = {err:.1e}, identical p = {same.p_value}"


def _kpss_loop(y):
    n = len(y)
    mu = sum(y) / n
    e = [v - mu for v in y]
    L = int(math.floor(4 * (n / 100) ** 0.25))
    s2 = sum(v * v for v in e) / n
    for j in range(1, L + 1):
        s2 += 2 * (1 - j / (L + 1)) * sum(e[t] * e[t - j] for t in range(j, n)) / n
    acc, tot = 0.0, 0.0
    for v in e:
        acc += v
        tot += acc * acc
    return tot / (n * n * s2)


def _entropy_loop(y):
    n = len(y)
    mu = sum(y) / n
    power = []
    for j in range(1, n // 2 + 1):
        re = sum((y[t] - mu) * math.cos(2 * math.pi * j * t / n) for t in range(n))
        im = sum((y[t] - mu) * math.sin(2 * math.pi * j * t / n) for t in range(n))
        power.append(re * re + im * im)
    tot = sum(power)
    return -sum(q / tot * math.log(q / tot) for q in power if q > 0) / math.log(len(power))


def criterion_8():
    exact = x_acf1([1, 2, 3, 4]) == 0.25 and x_acf1([1, -1, 1, -1]) == -0.75 and crossing_points([0, 2, 0, 2]) == 3
    y = np.random.default_rng(7).normal(size=200)
    err = max(abs(unitroot_kpss(y) - _kpss_loop(y.tolist())), abs(spectral_entropy(y) - _entropy_loop(y.tolist())))
    return exact and err < 1e-8, f"exact examples: {exact}, KPSS/entropy oracle error = {err:.1e}"


def criterion_9():
    y = np.random.default_rng(9).normal(size=80).cumsum()
    fit = train_pipeline(y, ["naive"], WindowSpec(30), PriorConfig(), "OP", 0)
    res = forecast_h(fit, y, 18)
    ok = bool(np.all(res.points == y[-1]))
    return ok, f"points equal last value at all 18 steps: {ok}"


def criterion_10(tmp_dir):
    args = ["benchmark", "--series", "synthetic:panel", "--models", "naive,rw_drift,ets_aan,ar",
            "--modes", "SA,OP,FEBAMA", "--k", "2", "--seed", "10"]
    outs = []
    for tag in ("a", "b"):
        out = tmp_dir / tag
        r = CliRunner().invoke(main, [*args, "--output-dir", str(out)], catch_exceptions=False)
        if r.exit_code != 0:
            return False, f"benchmark exited {r.exit_code}"
        outs.append(out)
    names = ("benchmark.csv", "individual_models.csv")
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    rows = len((outs[0] / "benchmark.csv").read_text().splitlines()) - 1
    return same and rows == 11, f"byte-identical CSVs: {same}, {rows} subsets"


# ----------------------------------------------------------------------------
# pytest wrappers
# ----------------------------------------------------------------------------


def _report(capsys, number, result):
    ok, detail = result
    with capsys.disabled():
        print(f"\nCRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_01_simplex(capsys):
    _report(capsys, 1, criterion_1())


def test_criterion_02_op_reduction(capsys):
    _report(capsys, 2, criterion_2())


def test_criterion_03_nesting(capsys):
    _report(capsys, 3, criterion_3())


def test_criterion_04_regime_recovery(capsys):
    _report(capsys, 4, criterion_4())


def test_criterion_05_variable_selection(capsys):
    _report(capsys, 5, criterion_5())


def test_criterion_06_gradient(capsys):
    _report(capsys, 6, criterion_6())


def test_criterion_07_metric_oracles(capsys):
    _report(capsys, 7, criterion_7())


def test_criterion_08_feature_oracles(capsys):
    _report(capsys, 8, criterion_8())


def test_criterion_09_multi_step_identity(capsys):
    _report(capsys, 9, criterion_9())


def test_criterion_10_determinism(capsys, tmp_path):
    _report(capsys, 10, criterion_10(tmp_path))


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    checks = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
              criterion_6, criterion_7, criterion_8, criterion_9]
    for i, check in enumerate(checks, start=1):
        ok, detail = check()
        print(f"CRITERION {i:>2}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    with tempfile.TemporaryDirectory() as tmp:
        ok, detail = criterion_10(Path(tmp))
        print(f"CRITERION 10: {'PASS' if ok else 'FAIL'}  {detail}")
