import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> [title, ok, details]; filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, details = ACCEPTANCE[n]
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}"
        if details:
            line += "  [" + "; ".join(details) + "]"
        terminalreporter.write_line(line)
