import pytest

from ttess.geometry import UNIT_SQUARE, line_through
from ttess.model import GibbsModel
from ttess.sampler import ChainConfig, run
from ttess.statistics import model10_specs, model11_specs


def random_tessellation(seed: int, steps: int = 400, window=UNIT_SQUARE, lam: float = 0.0):
    """A state of a short CRTT chain; cheap and varied."""
    m = GibbsModel(tuple(model10_specs()), (0.0, 0.0), lam)
    return run(m, window, ChainConfig(seed=seed, n_steps=steps, burn_in=steps - 1, thin=1)).last


def pool_lines(k: int):
    """Up to three generic lines through the unit square."""
    lines = [
        line_through((0.0, 0.31), (1.0, 0.43)),
        line_through((0.27, 0.0), (0.61, 1.0)),
        line_through((0.0, 0.83), (1.0, 0.12)),
    ]
    return lines[:k]


@pytest.fixture
def crtt_states():
    return [random_tessellation(s) for s in range(6)]


@pytest.fixture
def model11():
    return GibbsModel(tuple(model11_specs()), (0.5, 2.0, 0.3, 0.2))


# one summary line per acceptance criterion, printed at the end of the run
AC_LINES: dict = {}


def report_criterion(key: str, passed: bool, detail: str) -> None:
    AC_LINES[key] = f"{key} {'PASS' if passed else 'FAIL'}  {detail}"
    print(AC_LINES[key])


def pytest_terminal_summary(terminalreporter):
    if AC_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(AC_LINES):
            terminalreporter.write_line(AC_LINES[key])
