from __future__ import annotations

from pathlib import Path

import pytest

from evcs_forensics.scenario import builtin_scenario_1, generate, write_logs

REPO = Path(__file__).resolve().parents[1]
SCENARIOS = REPO / "scenarios"

_acceptance: dict[str, str] = {}
_criteria: dict[str, str] = {}


@pytest.fixture
def scenario1_logs(tmp_path):
    records, manifest = generate(builtin_scenario_1())
    out = tmp_path / "logs"
    write_logs(out, records, manifest)
    return out


def pytest_collection_modifyitems(items):
    for item in items:
        doc = getattr(item, "function", None) and item.function.__doc__
        if doc and "test_acceptance.py" in item.nodeid:
            _criteria[item.name] = doc.strip().splitlines()[0]


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance[report.nodeid.split("::")[-1]] = report.outcome
    elif report.when == "setup" and report.failed and "test_acceptance.py" in report.nodeid:
        _acceptance[report.nodeid.split("::")[-1]] = "error"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_acceptance.items()):
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] {name}: {_criteria.get(name, '')}".rstrip(": "))
