"""Shared test helpers.

Criterion results registered via ``record_criterion`` are echoed one per line
in the terminal summary so the gate's verdicts are visible in any pytest run.
"""

_CRITERION_LINES = {}


def record_criterion(num, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    line = "criterion %02d: %s" % (num, status)
    if detail:
        line += " - %s" % detail
    _CRITERION_LINES[num] = line


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERION_LINES):
        terminalreporter.write_line(_CRITERION_LINES[num])
