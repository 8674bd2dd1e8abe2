"""Shared pytest plumbing.

The acceptance tests report one verdict line per criterion; pytest
captures test stdout, so they also register their lines here to be
echoed in a terminal section after the run.
"""

_gate_lines: list[str] = []


def record_gate_line(line: str):
    _gate_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _gate_lines:
        terminalreporter.section("acceptance gate")
        for line in _gate_lines:
            terminalreporter.line(line)
