"""Command-line entry points.

Five subcommands: ``fit`` trains a super learner from a CSV, ``predict``
applies a saved model, ``simulate`` and ``ate`` run the built-in Monte
Carlo experiments, and ``report`` renders a report CSV as Markdown.
Exit codes: 0 success, 2 configuration problem, 3 data problem.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from ._version import __version__
from .config import ate_config_from, load_json, prediction_config_from, super_learner_config_from
from .errors import ConfigError, DataError
from .experiments import (
    default_prediction_learners,
    run_ate_experiment,
    run_prediction_experiment,
)
from .fileio import (
    atomic_write_text,
    read_matrix_csv,
    read_report_csv,
    render_markdown_report,
    write_manifest,
    write_predictions_csv,
    write_report_csv,
)
from .superlearner import (
    SuperLearnerConfig,
    fit_super_learner,
    load_model,
    predict_super_learner,
    save_model,
)


def _cmd_fit(args) -> int:
    if args.config:
        config = super_learner_config_from(load_json(args.config))
    else:
        config = SuperLearnerConfig(learners=default_prediction_learners())
    if args.seed is not None:
        config.seed = args.seed
    X, y, feature_names = read_matrix_csv(args.data, outcome=args.outcome)
    model = fit_super_learner(X, y, config)
    model.feature_names = feature_names
    save_model(model, args.out)
    weight_text = ", ".join(
        f"{name}={w:.4f}" for name, w in zip(model.learner_names, model.weights)
    )
    lam_text = f", lambda={model.huber_lambda:.6g}" if model.huber_lambda is not None else ""
    print(f"fitted {config.loss_mode}/{config.ensemble_mode} on {y.size} rows: "
          f"{weight_text}{lam_text}")
    print(f"wrote model to {args.out}")
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    X, _, names = read_matrix_csv(args.data)
    if model.feature_names is not None:
        missing = [c for c in model.feature_names if c not in names]
        if missing:
            raise DataError(f"{args.data}: missing feature columns {missing}")
        columns = [names.index(c) for c in model.feature_names]
        X = np.ascontiguousarray(X[:, columns])
    elif model.full_models and X.shape[1] != model.full_models[0].n_features:
        raise DataError(
            f"{args.data}: model expects {model.full_models[0].n_features} feature "
            f"columns, file has {X.shape[1]}"
        )
    predictions = predict_super_learner(model, X)
    write_predictions_csv(args.out, predictions)
    print(f"wrote {predictions.size} predictions to {args.out}")
    return 0


def _run_experiment(args, config_from, runner) -> int:
    config = config_from(load_json(args.config))
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    report = runner(config)
    write_report_csv(args.out, report.rows)
    manifest_path = args.manifest or f"{args.out}.manifest.json"
    write_manifest(manifest_path, report.manifest)
    print(f"{config.scenario.label}: {config.replications} replications, "
          f"{len(report.failures)} failed, {report.manifest['elapsed_seconds']}s")
    print(f"wrote report to {args.out} and manifest to {manifest_path}")
    return 0


def _cmd_simulate(args) -> int:
    return _run_experiment(args, prediction_config_from, run_prediction_experiment)


def _cmd_ate(args) -> int:
    return _run_experiment(args, ate_config_from, run_ate_experiment)


def _cmd_report(args) -> int:
    rows = read_report_csv(args.input)
    text = render_markdown_report(rows)
    if args.out:
        atomic_write_text(args.out, text)
        print(f"wrote markdown to {args.out}")
    else:
        print(text, end="")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robuststack",
        description="Robust super learning with a cross-validated Huber loss.",
    )
    parser.add_argument("--version", action="version", version=f"robuststack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="train a super learner from a CSV file")
    fit.add_argument("--data", required=True, help="training CSV with a header row")
    fit.add_argument("--outcome", required=True, help="name of the outcome column")
    fit.add_argument("--config", help="JSON config (learners, loss mode, folds, ...)")
    fit.add_argument("--out", required=True, help="where to write the model JSON")
    fit.add_argument("--seed", type=int, help="override the config seed")
    fit.set_defaults(func=_cmd_fit)

    pred = sub.add_parser("predict", help="apply a saved model to a CSV file")
    pred.add_argument("--model", required=True, help="model JSON from 'fit'")
    pred.add_argument("--data", required=True, help="CSV with the model's feature columns")
    pred.add_argument("--out", required=True, help="where to write the predictions CSV")
    pred.set_defaults(func=_cmd_predict)

    sim = sub.add_parser("simulate", help="run the cost-prediction experiment")
    sim.add_argument("--config", required=True, help="experiment JSON config")
    sim.add_argument("--out", required=True, help="where to write the report CSV")
    sim.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.add_argument("--workers", type=int, help="override the worker count")
    sim.set_defaults(func=_cmd_simulate)

    ate = sub.add_parser("ate", help="run the treatment-effect experiment")
    ate.add_argument("--config", required=True, help="experiment JSON config")
    ate.add_argument("--out", required=True, help="where to write the report CSV")
    ate.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    ate.add_argument("--seed", type=int, help="override the config seed")
    ate.add_argument("--workers", type=int, help="override the worker count")
    ate.set_defaults(func=_cmd_ate)

    rep = sub.add_parser("report", help="render a report CSV as Markdown")
    rep.add_argument("--input", required=True, help="report CSV from 'simulate' or 'ate'")
    rep.add_argument("--out", help="Markdown output path (default: stdout)")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage or version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
