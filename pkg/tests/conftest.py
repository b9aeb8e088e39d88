import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict line; returns the recording function."""
    def record(number: int, passed: bool, detail: str):
        _LINES.append((number, passed, detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_LINES):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
