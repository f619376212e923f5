import numpy as np
import pytest

from graphtube.confinement import ConfinementField, PotentialShape
from graphtube.geometry import make_spider


def plane_directions(degrees):
    a = np.deg2rad(np.asarray(degrees, dtype=float))
    return np.column_stack([np.cos(a), np.sin(a)])


@pytest.fixture(scope="session")
def spider112():
    """Three rays in the plane at 120 degrees with widths (1, 1, 2)."""
    return make_spider(plane_directions([90, 210, 330]), [1.0, 1.0, 2.0])


@pytest.fixture(scope="session")
def symmetric_spider():
    return make_spider(plane_directions([0, 120, 240]), [1.0, 1.0, 1.0])


@pytest.fixture(scope="session")
def field112(spider112):
    return ConfinementField(spider112, PotentialShape.power_ratio(2.0))


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
