import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def criteria(request):
    """Collects one PASS/FAIL line per acceptance criterion for the final report."""
    return request.config.stash.setdefault(_CRITERIA, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in lines.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
