import math

import numpy as np
import pytest

from tegsim.lindblad import GeneratorSpec, LindbladTerm
from tegsim.thermoelectric import DeviceParams, OperatingPoint

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)


def thermal_qubit(delta=1.0, temp=0.5, gamma=0.3):
    """Qubit with splitting ``delta`` relaxing toward its Gibbs state at ``temp``."""
    h = np.diag([0.0, delta]).astype(complex)
    up = gamma * math.exp(-delta / temp)
    return GeneratorSpec(h, (LindbladTerm(SIGMA_MINUS, gamma),
                             LindbladTerm(SIGMA_MINUS.conj().T, up)))


def random_density(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (a + a.conj().T)


def random_generator(rng, d, n_terms=3):
    terms = tuple(LindbladTerm(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)),
                               float(rng.random())) for _ in range(n_terms))
    return GeneratorSpec(random_hermitian(rng, d), terms)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def default_params():
    return DeviceParams()


@pytest.fixture
def default_point(default_params):
    return OperatingPoint.from_voltage(default_params, 0.2)


# acceptance criteria report: criterion number -> (passed, detail)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
