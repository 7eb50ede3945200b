"""Suite-wide pytest wiring.

Holds the acceptance-criteria scoreboard: tests/test_acceptance.py records
one line per criterion, and the terminal-summary hook prints them after the
run so each criterion's pass/fail verdict is visible even under output
capture.
"""

CRITERION_LINES = []


def record_criterion(number, ok, detail):
    """Append one scoreboard line and return whether the criterion passed."""
    verdict = "PASS" if ok else "FAIL"
    CRITERION_LINES.append(f"criterion {number:2d}: {verdict} — {detail}")
    return ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(CRITERION_LINES):
        terminalreporter.write_line(line)
