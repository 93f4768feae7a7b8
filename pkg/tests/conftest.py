import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Append one acceptance line: ``record(criterion, passed, text)``."""

    def _record(criterion, passed, text):
        line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
