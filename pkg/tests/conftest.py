"""Shared pytest hooks: echo the acceptance-suite verdict lines.

The acceptance tests accumulate one ``ACCEPTANCE <n> <name>: PASS|FAIL``
line each; stdout is captured by default, so the lines are repeated in
the terminal summary where they are always visible.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None) if module else None
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for line in results:
        terminalreporter.write_line(line)
