import numpy as np
import pytest

from safetycage._backend import NUMBA_AVAILABLE
from safetycage.dataset import generate_synthetic_dataset

BACKENDS = ["numpy"] + (["numba"] if NUMBA_AVAILABLE else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic_dataset(3, 300, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# filled by the acceptance tests, echoed after the run so the verdicts survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
