from __future__ import annotations

import pytest

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def acceptance_line(request):
    """Record one pass/fail line for the acceptance summary printed at the end of the run."""

    def record(criterion: str, passed: bool, detail: str) -> None:
        request.config.stash[ACCEPTANCE].append(f"{criterion:<4} {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda l: int(l[1:4].strip())):
        terminalreporter.write_line(line)
