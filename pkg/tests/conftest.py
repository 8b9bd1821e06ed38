import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from smre import instrument
from smre import tensor as T
from smre.config import Dims

settings.register_profile("smre", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("smre")

SMALL_DIMS = Dims(d_v=16, d_h=8, d_s=6, d_t=6, d_e=6, d_dec=8, d_att=5, clips=26)


@pytest.fixture
def f64():
    with T.precision(np.float64):
        yield


@pytest.fixture(autouse=True)
def _clean_state():
    instrument.reset()
    dtype = T.default_dtype()
    yield
    T.set_default_dtype(dtype)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import summary_lines

    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
