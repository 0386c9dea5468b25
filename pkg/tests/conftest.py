import numpy as np
import pytest

from homlab.cell_solver import solve_cell_problems
from homlab.periodic_fields import build_preset

SQRT3 = np.sqrt(3.0)


@pytest.fixture(scope="session")
def scalar1d_with_v():
    cs = build_preset("scalar1d", [2.0, 1.0, 1.0, 0.0, 0.0], lam=6.0)
    corr, hom = solve_cell_problems(cs)
    return cs, corr, hom


@pytest.fixture(scope="session")
def smooth2d():
    cs = build_preset("smooth2d", [2.0, 1.0, 0.5, 0.5, 0.5], lam=3.5)
    corr, hom = solve_cell_problems(cs)
    return cs, corr, hom


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(number, title, ok, detail):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append((number, line))
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
