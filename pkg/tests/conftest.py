import pytest

_LINES = []


@pytest.fixture
def report():
    """report(name, ok, detail) records one acceptance line and prints it."""

    def emit(name, ok, detail=""):
        line = f"{name}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _LINES.append(line)
        print(line, flush=True)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
