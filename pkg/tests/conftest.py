import numpy as np
import pytest

from trunctx.grids import BoxDomain, IntervalDomain, make_grid

I_MODEL = IntervalDomain(-2.0, -1.0)
J_MODEL = IntervalDomain(0.0, 1.0)
OMEGA1 = BoxDomain((-2.0, -2.0), (-1.0, -1.0))
OMEGA2 = BoxDomain((0.0, 0.0), (1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def model_grids():
    """(I grid, J grid) on the model pair, 128 cells each."""
    return make_grid(I_MODEL, 128), make_grid(J_MODEL, 128)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
