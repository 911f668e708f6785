import numpy as np
import pytest

from wignerprop.harness import load_preset, run_scenario
from wignerprop.model import CUBIC_WELL, PhasePoint, PolynomialPotential

ELLIPTIC_R0 = PhasePoint(0.636, 0.0)
ELLIPTIC_T = 1.8
HBAR = 0.01


@pytest.fixture(scope="session")
def cubic():
    return CUBIC_WELL


@pytest.fixture(scope="session")
def harmonic():
    return PolynomialPotential((0.0, 0.0, 0.5))


@pytest.fixture(scope="session")
def elliptic_run():
    """All three levels for the cubic-well preset (computed once per session)."""
    return run_scenario(load_preset("fig3-elliptic"), emit=False)


@pytest.fixture(scope="session")
def harmonic_run():
    return run_scenario(load_preset("harmonic-liouville"), emit=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria report: number -> (passed, detail)
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
