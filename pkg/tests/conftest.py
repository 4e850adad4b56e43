import json
import random

import pytest

from parafan.clock import VirtualClock

_acceptance_results = []


@pytest.fixture
def vclock():
    return VirtualClock()


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(r if isinstance(r, str) else json.dumps(r, ensure_ascii=False))
            f.write("\n")
    return path


def synthetic_lines(count, seed=0):
    """Deterministic mix of valid, invalid and malformed schema lines.

    Returns (lines, expected) where expected counts each outcome.
    """
    rng = random.Random(seed)
    expected = {"valid": 0, "invalid": 0, "malformed": 0}
    lines = []
    for i in range(count):
        r = rng.random()
        if r < 0.05:
            lines.append('{"serial": "broken' + str(i))
            expected["malformed"] += 1
        elif r < 0.35:
            lines.append(json.dumps({
                "serial": f"Translate {i}", "template": "Translate: {data}",
                "data": [f"item {i}"], "category": "Translation",
            }))
            expected["invalid"] += 1
        else:
            lines.append(json.dumps({
                "serial": f"Translate these: a{i}, b{i}", "template": "Translate: {data}",
                "data": [f"a{i}", f"b{i}"], "category": "Translation", "language": "en",
            }))
            expected["valid"] += 1
    return lines, expected


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance_results:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
