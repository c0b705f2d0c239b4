"""Suite-wide hooks.

Every KIRWLS solve made anywhere in the test session is recorded so the
simplex and monotone-objective invariants can be checked across all of them,
and acceptance results are echoed in the terminal summary.
"""

import numpy as np
import pytest

import rkde.attention
import rkde.kirwls

SIMPLEX_SLACK = 1e-12
MONOTONE_SLACK = 1e-10


class KirwlsLog:
    def __init__(self):
        self.runs = 0
        self.simplex_violations = []
        self.monotone_violations = []

    def record(self, report):
        self.runs += 1
        for w in report.weight_trace:
            w = np.asarray(w)
            err = max(-float(w.min()), abs(float(w.sum()) - 1.0))
            if err > SIMPLEX_SLACK:
                self.simplex_violations.append(err)
        rise = np.diff(report.objective_trace)
        if rise.size and rise.max() > MONOTONE_SLACK:
            self.monotone_violations.append(float(rise.max()))

    @property
    def ok(self):
        return not self.simplex_violations and not self.monotone_violations


KIRWLS_LOG = KirwlsLog()
ACCEPTANCE_LINES = []

_solve = rkde.kirwls.kirwls_solve


def _recording_solve(*args, **kwargs):
    report = _solve(*args, **kwargs)
    KIRWLS_LOG.record(report)
    return report


rkde.kirwls.kirwls_solve = _recording_solve
rkde.attention.kirwls_solve = _recording_solve


def pytest_sessionfinish(session, exitstatus):
    if KIRWLS_LOG.runs and not KIRWLS_LOG.ok and exitstatus == 0:
        session.exitstatus = pytest.ExitCode.TESTS_FAILED


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES and not KIRWLS_LOG.runs:
        return
    terminalreporter.section("acceptance")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    status = "PASS" if KIRWLS_LOG.ok else "FAIL"
    terminalreporter.write_line(
        f"{status} criterion 4 (suite-wide): {KIRWLS_LOG.runs} KIRWLS runs, "
        f"{len(KIRWLS_LOG.simplex_violations)} simplex violations, "
        f"{len(KIRWLS_LOG.monotone_violations)} objective increases"
    )
