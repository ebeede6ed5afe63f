import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# filled by the acceptance tests, printed once at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


# Brute-force spin operators, built from Kronecker products so they share no
# code with the package's bit-basis construction.  Site j (1-based) is bit
# j-1 of the basis index, so the last factor of the product is site 1.
SZ = np.diag([-0.5, 0.5])
SP = np.array([[0.0, 0.0], [1.0, 0.0]])  # |1><0|, raises the spin
SX = 0.5 * np.array([[0.0, 1.0], [1.0, 0.0]])


def site_op(op, j, L):
    out = np.eye(1)
    for site in range(L, 0, -1):
        out = np.kron(out, op if site == j else np.eye(2))
    return out


def brute_h0(L, h, J=1.0, Delta=1.0):
    H = sum(h[j - 1] * site_op(SZ, j, L) for j in range(1, L + 1))
    for j in range(1, L):
        Sp, Sm = site_op(SP, j, L), site_op(SP.T, j, L)
        Sp2, Sm2 = site_op(SP, j + 1, L), site_op(SP.T, j + 1, L)
        H = H + 0.5 * J * (Sp @ Sm2 + Sm @ Sp2)
        H = H + J * Delta * site_op(SZ, j, L) @ site_op(SZ, j + 1, L)
    return H


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
