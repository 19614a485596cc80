import numpy as np
import pytest
from hypothesis import settings

from relaxim.manifold import perron_config
from relaxim.nonlin import NemytskiiSine1D, sine_function
from relaxim.spectrum import Dirichlet1D, eigenvalues

settings.register_profile("relaxim", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("relaxim")


@pytest.fixture(scope="session")
def seq16():
    """lambda_n = n^2, the Dirichlet Laplacian on (0, pi)."""
    return eigenvalues(Dirichlet1D(), 16)


@pytest.fixture(scope="session")
def ref_cfg(seq16):
    """N = 1, L = 1, eps = 0.05: gap 3, contraction 2/3."""
    return perron_config(seq16, 1, 0.05, 1.0)


@pytest.fixture(scope="session")
def sine16():
    return NemytskiiSine1D(sine_function(), 16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
