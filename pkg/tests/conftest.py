import numpy as np
import pytest

from voa.costmap import CostMap, generate_random
from voa.geometry import PlannedPath


@pytest.fixture
def small_map():
    return generate_random(11, 20, 20, smoothing=1.5)


@pytest.fixture
def short_path():
    return PlannedPath.straight((5.5, 10.5), (13.5, 10.5))


def constant_map(c: float, size: int = 40) -> CostMap:
    return CostMap(np.full((size, size), c))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    names = [f"A{i}" for i in range(1, 9)]
    collected = [n for n in names if n in RESULTS]
    if not collected and not any("test_acceptance" in str(r.nodeid) for r in terminalreporter.stats.get("passed", [])
                                 + terminalreporter.stats.get("failed", [])):
        return
    terminalreporter.section("acceptance criteria")
    for n in names:
        terminalreporter.write_line(RESULTS.get(n, f"{n} FAIL  did not complete"))
