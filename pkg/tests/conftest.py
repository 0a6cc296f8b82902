import sys
import numpy as np
import pytest

from weakpc.model import GroundTruth, Panel


def noiseless(T=30, N=20, r=2, seed=0, alphas=None):
    """Rank-r panel with zero errors and its ground truth."""
    rng = np.random.default_rng(seed)
    F0 = rng.standard_normal((T, r))
    L0 = rng.standard_normal((N, r))
    C0 = F0 @ L0.T
    truth = GroundTruth(F0, L0, C0, np.zeros((T, N)), np.ones(r) if alphas is None else np.asarray(alphas))
    return Panel(C0), truth


def subspace_distance(A, B):
    """Frobenius distance between orthogonal projections onto col-span(A), col-span(B)."""
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    return np.linalg.norm(qa @ qa.T - qb @ qb.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
