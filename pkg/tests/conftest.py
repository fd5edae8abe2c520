"""Prints the acceptance verdict lines after the run, outside capture."""

import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance") or sys.modules.get(
        "test_acceptance")
    if mod is not None and mod.VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in mod.VERDICTS:
            terminalreporter.write_line(line)
