import math

import pytest

from levy_she.levy_measure import LogTail, ModelParams, ParetoTail, PointMass, StableLike, TruncatedExp

KAPPA = 1.0 / (2.0 * math.pi)


def families():
    return [
        PointMass(1.0, 1.0),
        ParetoTail(1.0),
        ParetoTail(2.0),
        ParetoTail(0.5, 2.0),
        StableLike(1.5, 1.0),
        StableLike(0.5, 2.0),
        LogTail(2.0),
        TruncatedExp(1.5, 2.0),
    ]


@pytest.fixture
def params():
    return ModelParams(d=1, kappa=KAPPA, t=1.0)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def record(criterion, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
