import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

# criterion label -> (passed, detail); filled by the acceptance tests
ACCEPTANCE_RESULTS = {}


@pytest.fixture(scope="session")
def acceptance_params():
    return json.loads((FIXTURES / "acceptance.json").read_text())


@pytest.fixture
def report():
    """Record one acceptance line: ``report(label, passed, detail)``."""

    def _report(label, passed, detail=""):
        ACCEPTANCE_RESULTS[label] = (bool(passed), detail)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[0])):
        passed, detail = ACCEPTANCE_RESULTS[label]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
