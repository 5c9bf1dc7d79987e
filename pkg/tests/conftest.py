import numpy as np
import pytest

from mapfluct import LevyComponent, load_builtin, make_spec, validate


@pytest.fixture(scope="session")
def model_a():
    return load_builtin("MODEL-A")


@pytest.fixture(scope="session")
def model_b():
    return load_builtin("MODEL-B")


@pytest.fixture(scope="session")
def model_c():
    return load_builtin("MODEL-C")


@pytest.fixture(scope="session")
def model_d():
    return load_builtin("MODEL-D")


def scalar_bm(drift=0.0, sigma2=1.0):
    return validate(make_spec([[0.0]], [LevyComponent(drift, sigma2)]))


def bm_phi(q, drift=0.0, sigma2=1.0):
    """Right root of drift*a + sigma2*a^2/2 = q."""
    if sigma2 == 0:
        return q / drift
    return (-drift + np.sqrt(drift * drift + 2 * sigma2 * q)) / sigma2


@pytest.fixture(scope="session")
def scalar():
    return scalar_bm()


@pytest.fixture(scope="session")
def cyclic3():
    Q = [[-2.0, 1.8, 0.2], [0.3, -1.0, 0.7], [2.5, 0.5, -3.0]]
    levy = [LevyComponent(1.0, 1.0), LevyComponent(-0.5, 2.0), LevyComponent(0.3, 0.5)]
    return validate(make_spec(Q, levy, name="cyclic3"))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
