"""Shared fixtures plus the acceptance-criteria summary hook.

Acceptance tests record one line per criterion through the ``criterion``
fixture; the terminal summary prints them all so a run ends with a
visible PASS/FAIL per criterion even when earlier ones failed.
"""

import contextlib

import numpy as np
import pytest

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@contextlib.contextmanager
def _criterion(number: int, description: str):
    rec = {"passed": False, "detail": "did not complete"}
    try:
        yield rec
    except Exception as exc:
        _ACCEPTANCE[number] = (description, False, f"error: {exc}")
        raise
    detail = str(rec.get("detail", ""))
    passed = bool(rec["passed"])
    _ACCEPTANCE[number] = (description, passed, detail)
    assert passed, f"criterion {number} ({description}): {detail}"


@pytest.fixture
def criterion():
    return _criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        description, passed, detail = _ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        line = f"ACCEPTANCE {number:>2} {status}  {description}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20260501)


@pytest.fixture
def toy_regression():
    """Small fixed regression problem: y linear in 3 covariates plus noise."""
    gen = np.random.default_rng(99)
    X = gen.normal(size=(60, 3))
    y = 2.0 + X @ np.array([1.0, -0.5, 0.25]) + 0.1 * gen.normal(size=60)
    return X, y
