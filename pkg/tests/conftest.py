"""Shared pytest hooks.

The acceptance tests record one verdict line per criterion; replaying them
in the terminal summary keeps the pass/fail table visible even though
pytest captures stdout of passing tests.
"""

ACCEPTANCE_VERDICTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
