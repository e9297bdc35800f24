import warnings

import numpy as np
import pytest

from emtopo.forward import AsymptoticRegimeWarning
from emtopo.kernels import WaveParameters


@pytest.fixture
def wp4():
    return WaveParameters.from_kappa(4 * np.pi)


@pytest.fixture
def wp8():
    return WaveParameters.from_kappa(8 * np.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _quiet_regime_warning():
    # the shipped imaging configurations sit just above the rho*kappa limit on purpose
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AsymptoticRegimeWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number])
