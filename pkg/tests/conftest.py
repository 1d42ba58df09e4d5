import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Register a one-line pass/fail verdict for the acceptance summary."""

    def record(number, name, ok, detail):
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append((number, f"criterion {number:2d} {status}  {name}: {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
