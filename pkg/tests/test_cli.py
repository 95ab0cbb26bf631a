import json

import numpy as np
import pytest
from click.testing import CliRunner

from featpool.cli import RunConfig, main, model_subsets
from featpool.errors import ConfigError


def _run(args, env=None):
    return CliRunner().invoke(main, args, env=env, catch_exceptions=False)


def _err(result):
    return json.loads(result.output.strip().splitlines()[-1])


@pytest.fixture
def series_csv(tmp_path):
    y = np.random.default_rng(0).normal(size=70).cumsum()
    p = tmp_path / "y.csv"
    p.write_text("value\n" + "\n".join(repr(float(v)) for v in y) + "\n")
    return p


def test_train_then_forecast(tmp_path, series_csv):
    out = tmp_path / "out"
    common = ["--series", str(series_csv), "--models", "naive,rw_drift,ar", "--output-dir", str(out)]
    r = _run(["train", *common, "--modes", "FEBAMA", "--k", "2", "--restarts", "0"])
    assert r.exit_code == 0, r.output
    fit = out / "fit_y_FEBAMA.json"
    r = _run(["forecast", *common, "--fit", str(fit), "--horizon", "18"])
    assert r.exit_code == 0, r.output
    doc = json.loads((out / "forecast_y_FEBAMA.json").read_text())
    assert len(doc["steps"]) == 18
    for step in doc["steps"]:
        assert abs(sum(step["weights"]) - 1) < 1e-12
    lines = (out / "weights_y_FEBAMA.csv").read_text().splitlines()
    assert lines[0] == "t_or_h,model,weight" and len(lines) == 1 + 18 * 3
    manifest = json.loads((out / "manifest_forecast.json").read_text())
    assert manifest["seed"] == 0 and "numpy" in manifest["versions"]
    assert manifest["outputs"] == ["forecast_y_FEBAMA.json", "weights_y_FEBAMA.csv"]


def test_k_too_large_exit_2(tmp_path, series_csv):
    r = _run(["train", "--series", str(series_csv), "--models", "naive,ar", "--k", "99",
              "--output-dir", str(tmp_path)])
    assert r.exit_code == 2
    assert _err(r)["field"] == "k"


def test_unknown_config_key_exit_2(tmp_path, series_csv):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(f"series: [{series_csv}]\nmodels: [naive, ar]\nwindow_size: 100\n")
    r = _run(["train", "--config", str(cfg), "--output-dir", str(tmp_path)])
    assert r.exit_code == 2
    assert _err(r)["field"] == "window_size"


def test_missing_file_exit_3(tmp_path):
    r = _run(["features", "--series", str(tmp_path / "nope.csv"), "--output-dir", str(tmp_path)])
    assert r.exit_code == 3


def test_flags_override_file(tmp_path, series_csv):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(f"series: [{series_csv}]\nmodels: [naive, ar]\nmodes: [SA]\nseed: 5\n")
    out = tmp_path / "o"
    r = _run(["train", "--config", str(cfg), "--seed", "9", "--output-dir", str(out)])
    assert r.exit_code == 0, r.output
    assert json.loads((out / "manifest_train.json").read_text())["seed"] == 9


def test_env_output_dir(tmp_path, series_csv):
    target = tmp_path / "from_env"
    r = _run(["fit-models", "--series", str(series_csv), "--models", "naive,ar", "--output-dir", "ignored"],
             env={"FEATPOOL_OUTPUT_DIR": str(target)})
    assert r.exit_code == 0, r.output
    assert (target / "densities_y.csv").exists()
    assert (target / "manifest_fit-models.json").exists()


def test_benchmark_byte_identical(tmp_path):
    args = ["benchmark", "--series", "synthetic:panel", "--models", "naive,rw_drift,ar",
            "--modes", "SA,OP", "--seed", "3", "--horizon", "6"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run([*args, "--output-dir", str(a)]).exit_code == 0
    assert _run([*args, "--output-dir", str(b)]).exit_code == 0
    for name in ("benchmark.csv", "individual_models.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert len((a / "benchmark.csv").read_text().splitlines()) == 1 + 4


def test_evaluate_writes_scores(tmp_path, series_csv):
    out = tmp_path / "ev"
    r = _run(["evaluate", "--series", str(series_csv), "--models", "naive,ar", "--modes", "SA,OP",
              "--start-t", "50", "--output-dir", str(out)])
    assert r.exit_code == 0, r.output
    lines = (out / "scores.csv").read_text().splitlines()
    assert lines[0] == "series,mode,LS,MASE" and len(lines) == 3
    assert (out / "dm_tests.csv").exists()


def test_model_subsets_count():
    assert len(model_subsets(list("abcd"))) == 11
    assert model_subsets(list("ab")) == [["a", "b"]]


def test_config_validation():
    with pytest.raises(ConfigError) as info:
        RunConfig.from_mapping({"series": ["x.csv"], "models": ["naive", "holt"]}).validate()
    assert info.value.field == "models"
