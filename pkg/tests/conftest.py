import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pauliqcnn.kernels import HAVE_NUMBA, using_backend

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

BACKENDS = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]


@pytest.fixture(params=BACKENDS)
def each_backend(request):
    with using_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(n, rng):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def pauli_matrix(label):
    """Dense matrix with qubit 0 as the least significant bit."""
    mats = {
        "I": np.eye(2, dtype=complex),
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]]),
        "Z": np.diag([1.0 + 0j, -1.0]),
    }
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(mats[ch], out)
    return out


ACCEPTANCE: dict[int, str] = {}


def report(criterion: int, passed: bool, detail: str) -> None:
    """Record one acceptance line; the terminal summary prints them in order."""
    line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
