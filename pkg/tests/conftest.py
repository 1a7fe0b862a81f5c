from __future__ import annotations

import pytest

from molesim.engine import Condition, RunConfig, run
from molesim.org import bundled_scenario, default_roster


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line[1])


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def record(number: int, name: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}" + (f" -- {detail}" if detail else "")
        request.config._acceptance_lines.append((number, line))
        print(line)
        assert ok, line

    return record


@pytest.fixture(scope="session")
def roster20():
    return default_roster(20)


@pytest.fixture(scope="session")
def scenario():
    return bundled_scenario("default")


@pytest.fixture(scope="session")
def desk_runs(roster20, scenario):
    """Three seeds of every condition at desk scale, shared across tests."""
    return {(c, s): run(RunConfig(c, s, scenario, roster20)) for c in Condition for s in range(3)}
