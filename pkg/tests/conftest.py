import warnings

import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def add(criterion, passed, detail):
        line = "criterion %-4s %s  %s" % (criterion, "PASS" if passed else "FAIL", detail)
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
