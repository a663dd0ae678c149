import sys

import numpy as np
import pytest

from spnn_fpv import photonics as ph


@pytest.fixture(scope="session")
def eim():
    return ph.EimModel()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def haar(n, rng):
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def oracle_transfer(theta, phi, arm=(0, 0, 0, 0), k1=0.5, k2=0.5):
    """Four explicit factors, written out independently of the library."""
    def bdc(k):
        return np.array([[np.sqrt(1 - k), 1j * np.sqrt(k)], [1j * np.sqrt(k), np.sqrt(1 - k)]])
    p_phi = np.diag([np.exp(1j * (phi + arm[0])), np.exp(1j * arm[1])])
    p_theta = np.diag([np.exp(1j * (theta + arm[2])), np.exp(1j * arm[3])])
    return bdc(k2) @ p_theta @ bdc(k1) @ p_phi


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        terminalreporter.write_line(acc.RESULTS[n])
