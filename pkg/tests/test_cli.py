"""End-to-end CLI checks: round-trips, exit codes, golden report."""

import json
from pathlib import Path

import numpy as np
import pytest

from robuststack.cli import main
from robuststack.config import super_learner_config_from
from robuststack.superlearner import fit_super_learner, load_model, predict_super_learner

DATA_DIR = Path(__file__).parent / "data"

FIT_CONFIG = {
    "learners": [{"name": "mean", "kind": "Mean"}, {"name": "ols", "kind": "OLS"}],
    "n_folds": 4,
    "seed": 5,
}

SIM_CONFIG = {
    "scenario": {"family": "cost", "regime": "low", "n_train": 60},
    "learners": FIT_CONFIG["learners"],
    "estimators": ["ensemble-standard", "ensemble-huber-partial", "ensemble-huber-nested"],
    "replications": 2,
    "test_size": 50,
    "n_folds": 3,
    "inner_folds": 3,
    "grid_points": 2,
    "workers": 1,
    "seed": 3,
}

ATE_CONFIG = {
    "scenario": {"family": "tweedie", "regime": "medium", "n_train": 60},
    "learners": FIT_CONFIG["learners"],
    "replications": 1,
    "n_folds": 3,
    "inner_folds": 3,
    "grid_points": 2,
    "true_ate_draws": 20_000,
    "workers": 1,
    "seed": 9,
}


def _write_csv(path, names, columns):
    lines = [",".join(names)]
    for row in zip(*columns):
        lines.append(",".join(format(float(v), ".17g") for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _training_file(path, n=40, seed=2):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=(3, n))
    y = 2.0 * a - b + 0.5 * rng.normal(size=n)
    # outcome deliberately not in the last column
    _write_csv(path, ["a", "y", "b", "c"], [a, y, b, c])
    return np.column_stack([a, b, c]), y


def _json_file(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def _read_predictions(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "prediction"
    return np.array([float(v) for v in lines[1:]])


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.startswith("robuststack ")


def test_no_subcommand_and_unknown_flag_exit_2(capsys):
    assert main([]) == 2
    assert main(["fit", "--nope"]) == 2
    capsys.readouterr()


def test_fit_predict_round_trip(tmp_path, capsys):
    X, y = _training_file(tmp_path / "train.csv")
    config_path = _json_file(tmp_path / "fit.json", FIT_CONFIG)
    model_path = tmp_path / "model.json"
    assert main(["fit", "--data", str(tmp_path / "train.csv"), "--outcome", "y",
                 "--config", config_path, "--out", str(model_path)]) == 0
    out = capsys.readouterr().out
    assert "fitted standard-mse/convex on 40 rows" in out
    assert f"wrote model to {model_path}" in out

    # predicting on the training file must reproduce in-sample predictions
    pred_path = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(model_path), "--data",
                 str(tmp_path / "train.csv"), "--out", str(pred_path)]) == 0
    from_cli = _read_predictions(pred_path)
    reference = fit_super_learner(X, y, super_learner_config_from(FIT_CONFIG))
    assert np.array_equal(from_cli, predict_super_learner(reference, X))

    model = load_model(str(model_path))
    assert model.feature_names == ["a", "b", "c"]
    assert np.array_equal(from_cli, predict_super_learner(model, X))


def test_predict_reorders_columns_by_name(tmp_path, capsys):
    X, _ = _training_file(tmp_path / "train.csv")
    model_path = tmp_path / "model.json"
    main(["fit", "--data", str(tmp_path / "train.csv"), "--outcome", "y",
          "--config", _json_file(tmp_path / "fit.json", FIT_CONFIG),
          "--out", str(model_path)])
    shuffled = tmp_path / "shuffled.csv"
    _write_csv(shuffled, ["c", "b", "a"], [X[:, 2], X[:, 1], X[:, 0]])
    out_path = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(model_path), "--data", str(shuffled),
                 "--out", str(out_path)]) == 0
    model = load_model(str(model_path))
    assert np.array_equal(_read_predictions(out_path), predict_super_learner(model, X))
    capsys.readouterr()


def test_predict_missing_feature_column_exit_3(tmp_path, capsys):
    X, _ = _training_file(tmp_path / "train.csv")
    model_path = tmp_path / "model.json"
    main(["fit", "--data", str(tmp_path / "train.csv"), "--outcome", "y",
          "--config", _json_file(tmp_path / "fit.json", FIT_CONFIG),
          "--out", str(model_path)])
    partial = tmp_path / "partial.csv"
    _write_csv(partial, ["a", "b"], [X[:, 0], X[:, 1]])
    assert main(["predict", "--model", str(model_path), "--data", str(partial),
                 "--out", str(tmp_path / "pred.csv")]) == 3
    err = capsys.readouterr().err
    assert "missing feature columns" in err and "'c'" in err


def test_fit_data_errors_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1.0,2.0\noops,3.0\n", encoding="utf-8")
    args = ["fit", "--data", str(bad), "--outcome", "y",
            "--out", str(tmp_path / "m.json")]
    assert main(args) == 3
    err = capsys.readouterr().err
    assert "row 3" in err and "'a'" in err

    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--outcome", "y",
                 "--out", str(tmp_path / "m.json")]) == 3
    capsys.readouterr()


def test_fit_config_errors_exit_2(tmp_path, capsys):
    _training_file(tmp_path / "train.csv")
    bad_config = _json_file(tmp_path / "bad.json", {"folds": 5})
    assert main(["fit", "--data", str(tmp_path / "train.csv"), "--outcome", "y",
                 "--config", bad_config, "--out", str(tmp_path / "m.json")]) == 2
    assert "error:" in capsys.readouterr().err


def test_simulate_is_deterministic_and_manifested(tmp_path, capsys):
    config_path = _json_file(tmp_path / "sim.json", SIM_CONFIG)
    first, second = tmp_path / "r1.csv", tmp_path / "r2.csv"
    assert main(["simulate", "--config", config_path, "--out", str(first)]) == 0
    assert main(["simulate", "--config", config_path, "--out", str(second),
                 "--manifest", str(tmp_path / "m2.json")]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert "wrote report" in capsys.readouterr().out

    default_manifest = json.loads((tmp_path / "r1.csv.manifest.json").read_text())
    named_manifest = json.loads((tmp_path / "m2.json").read_text())
    assert default_manifest["config_digest"] == named_manifest["config_digest"]
    assert default_manifest["scenario"] == "cost-low-n60"
    assert default_manifest["failed_replications"] == 0


def test_simulate_worker_and_seed_overrides(tmp_path, capsys):
    config_path = _json_file(tmp_path / "sim.json", SIM_CONFIG)
    base, pooled, reseeded = (tmp_path / n for n in ("b.csv", "w.csv", "s.csv"))
    main(["simulate", "--config", config_path, "--out", str(base)])
    assert main(["simulate", "--config", config_path, "--out", str(pooled),
                 "--workers", "2"]) == 0
    assert base.read_bytes() == pooled.read_bytes()

    assert main(["simulate", "--config", config_path, "--out", str(reseeded),
                 "--seed", "4"]) == 0
    assert base.read_bytes() != reseeded.read_bytes()
    digest = json.loads((base.with_suffix(".csv.manifest.json").with_name(
        "b.csv.manifest.json")).read_text())["config_digest"]
    redigest = json.loads((tmp_path / "s.csv.manifest.json").read_text())["config_digest"]
    assert digest != redigest
    capsys.readouterr()


def test_ate_command_runs(tmp_path, capsys):
    config_path = _json_file(tmp_path / "ate.json", ATE_CONFIG)
    out_path = tmp_path / "ate.csv"
    assert main(["ate", "--config", config_path, "--out", str(out_path)]) == 0
    manifest = json.loads((tmp_path / "ate.csv.manifest.json").read_text())
    assert manifest["experiment"] == "ate"
    text = out_path.read_text(encoding="utf-8")
    assert "true_ate" in text and "unadjusted" in text
    capsys.readouterr()


def test_report_golden_fixture_byte_exact(tmp_path, capsys):
    golden_csv = DATA_DIR / "golden_report.csv"
    golden_md = DATA_DIR / "golden_report.md"
    out_path = tmp_path / "report.md"
    assert main(["report", "--input", str(golden_csv), "--out", str(out_path)]) == 0
    assert out_path.read_bytes() == golden_md.read_bytes()
    capsys.readouterr()

    # stdout mode emits the same text
    assert main(["report", "--input", str(golden_csv)]) == 0
    assert capsys.readouterr().out == golden_md.read_text(encoding="utf-8")


def test_report_rejects_malformed_input(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("scenario,estimator,metric\nx,y,z\n", encoding="utf-8")
    assert main(["report", "--input", str(bad)]) == 3
    assert "error:" in capsys.readouterr().err


def test_simulate_rejects_bad_config_exit_2(tmp_path, capsys):
    config_path = _json_file(tmp_path / "sim.json",
                             {"scenario": {"regime": "nope", "n_train": 60}})
    assert main(["simulate", "--config", config_path,
                 "--out", str(tmp_path / "r.csv")]) == 2
    capsys.readouterr()
