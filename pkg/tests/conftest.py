import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line[1])


@pytest.fixture
def report():
    """Record one pass/fail line for the acceptance summary."""
    def add(number, name, passed, measured, expected):
        tag = "PASS" if passed else "FAIL"
        line = f"[{tag}] criterion {number:2d} {name}: measured {measured}; expected {expected}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return add
