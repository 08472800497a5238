"""CSV, JSON and Markdown input/output.

All writers go through an atomic rename so a crashed run never leaves a
half-written artifact behind.  Floats are serialized with 17 significant
digits, which round-trips IEEE doubles exactly.  CSV readers report
malformed input with one-based row and named column context.
"""

from __future__ import annotations

import csv
import json
import os
import re
import tempfile

import numpy as np

from .errors import DataError

__all__ = [
    "atomic_write_text",
    "format_value",
    "read_matrix_csv",
    "write_predictions_csv",
    "read_predictions_csv",
    "write_report_csv",
    "read_report_csv",
    "write_manifest",
    "render_markdown_report",
]

REPORT_HEADER = ("scenario", "estimator", "metric", "value")

# Per-grid-point diagnostics are kept in the CSV but left out of the
# rendered Markdown table, which would otherwise grow one column per
# lambda value.
_DIAGNOSTIC_METRIC = re.compile(r"^selection_mse_j\d+$")

_COUNT_METRICS = {"replications", "failed_replications"}


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_value(x: float) -> str:
    return format(float(x), ".17g")


def _read_rows(path: str) -> list[list[str]]:
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            return list(csv.reader(handle))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def read_matrix_csv(path: str, outcome: str | None = None):
    """Read a numeric CSV with a header row.

    Returns (X, y, feature_names).  When ``outcome`` is given, that
    column becomes y and the remaining columns, in file order, become the
    features; otherwise y is None.
    """
    rows = _read_rows(path)
    if not rows:
        raise DataError(f"{path}: file is empty, expected a header row")
    header = rows[0]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    y_col = None
    if outcome is not None:
        if outcome not in header:
            raise DataError(
                f"{path}: outcome column {outcome!r} not found; columns are {header}"
            )
        y_col = header.index(outcome)
    n_cols = len(header)
    if n_cols - (0 if y_col is None else 1) < 1:
        raise DataError(f"{path}: no feature columns besides the outcome")
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows after the header")
    data = np.empty((len(body), n_cols))
    for i, row in enumerate(body):
        if len(row) != n_cols:
            raise DataError(
                f"{path}: row {i + 2} has {len(row)} fields, expected {n_cols}"
            )
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {i + 2}, column {header[j]!r}: "
                    f"could not parse {cell!r} as a number"
                ) from None
            if not np.isfinite(v):
                raise DataError(
                    f"{path}: row {i + 2}, column {header[j]!r}: non-finite value {cell!r}"
                )
            data[i, j] = v
    if y_col is None:
        return data, None, header
    feature_idx = [j for j in range(n_cols) if j != y_col]
    # keep the features C-contiguous so downstream linear algebra is
    # bit-identical to fitting on an ordinary row-major array
    X = np.ascontiguousarray(data[:, feature_idx])
    return X, data[:, y_col], [header[j] for j in feature_idx]


def write_predictions_csv(path: str, predictions: np.ndarray) -> None:
    lines = ["prediction"]
    lines.extend(format_value(v) for v in predictions)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_predictions_csv(path: str) -> np.ndarray:
    rows = _read_rows(path)
    if not rows or rows[0] != ["prediction"]:
        raise DataError(f"{path}: expected a single 'prediction' column")
    out = np.empty(len(rows) - 1)
    for i, row in enumerate(rows[1:]):
        if len(row) != 1:
            raise DataError(f"{path}: row {i + 2} has {len(row)} fields, expected 1")
        try:
            out[i] = float(row[0])
        except ValueError:
            raise DataError(
                f"{path}: row {i + 2}: could not parse {row[0]!r} as a number"
            ) from None
    return out


def write_report_csv(path: str, rows: list[tuple[str, str, str, float]]) -> None:
    lines = [",".join(REPORT_HEADER)]
    for scenario, estimator, metric, value in rows:
        lines.append(f"{scenario},{estimator},{metric},{format_value(value)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_report_csv(path: str) -> list[tuple[str, str, str, float]]:
    rows = _read_rows(path)
    if not rows or tuple(rows[0]) != REPORT_HEADER:
        raise DataError(
            f"{path}: expected header {','.join(REPORT_HEADER)}"
        )
    out = []
    for i, row in enumerate(rows[1:]):
        if len(row) != 4:
            raise DataError(f"{path}: row {i + 2} has {len(row)} fields, expected 4")
        try:
            value = float(row[3])
        except ValueError:
            raise DataError(
                f"{path}: row {i + 2}, column 'value': could not parse {row[3]!r} as a number"
            ) from None
        out.append((row[0], row[1], row[2], value))
    return out


def write_manifest(path: str, manifest: dict) -> None:
    atomic_write_text(path, json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _format_cell(metric: str, value: float) -> str:
    if metric in _COUNT_METRICS:
        return str(int(value))
    return format(value, ".6g")


def render_markdown_report(rows: list[tuple[str, str, str, float]]) -> str:
    """One Markdown section per scenario: summary bullets plus a metric table.

    Scenario, estimator and metric ordering follow first appearance in
    the rows, so rendering is deterministic for a given report.
    """
    scenarios: list[str] = []
    for scenario, *_ in rows:
        if scenario not in scenarios:
            scenarios.append(scenario)
    chunks: list[str] = []
    for scenario in scenarios:
        sub = [r for r in rows if r[0] == scenario]
        chunks.append(f"## {scenario}")
        summary = [r for r in sub if r[1] == "summary"]
        if summary:
            chunks.append("")
            for _, _, metric, value in summary:
                chunks.append(f"- {metric}: {_format_cell(metric, value)}")
        estimators: list[str] = []
        metrics: list[str] = []
        table: dict[tuple[str, str], float] = {}
        for _, estimator, metric, value in sub:
            if estimator == "summary" or _DIAGNOSTIC_METRIC.match(metric):
                continue
            if estimator not in estimators:
                estimators.append(estimator)
            if metric not in metrics:
                metrics.append(metric)
            table[(estimator, metric)] = value
        if estimators:
            chunks.append("")
            chunks.append("| estimator | " + " | ".join(metrics) + " |")
            chunks.append("|" + " --- |" * (len(metrics) + 1))
            for est in estimators:
                cells = [
                    _format_cell(m, table[(est, m)]) if (est, m) in table else ""
                    for m in metrics
                ]
                chunks.append("| " + " | ".join([est] + cells) + " |")
        chunks.append("")
    return "\n".join(chunks).rstrip("\n") + "\n"
