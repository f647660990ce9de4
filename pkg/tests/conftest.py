import numpy as np
import pytest

from advlqr.riccati import LtiSystem, is_detectable, is_stabilizable

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def random_system(rng, n=None, m=None, radius=None, noise=False) -> LtiSystem:
    """Random stabilizable/detectable system with spectral radius drawn from [0.3, 1.3]."""
    while True:
        n_ = int(rng.integers(1, 7)) if n is None else n
        m_ = int(rng.integers(1, 4)) if m is None else m
        A = rng.standard_normal((n_, n_))
        r = rng.uniform(0.3, 1.3) if radius is None else radius
        A *= r / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
        B = rng.standard_normal((n_, m_))
        L = rng.standard_normal((n_, n_))
        Q = L @ L.T / n_ + 0.1 * np.eye(n_)
        L = rng.standard_normal((m_, m_))
        R = L @ L.T / m_ + 0.1 * np.eye(m_)
        Sw = None
        if noise:
            L = rng.standard_normal((n_, n_))
            Sw = L @ L.T / n_ + 0.2 * np.eye(n_)
        if is_stabilizable(A, B) and is_detectable(A, np.linalg.cholesky(Q).T):
            return LtiSystem(A, B, Q, R, Sw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key:>2}: {detail}")
