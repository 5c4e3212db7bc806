import numpy as np
import pytest

from nestkrylov.sparse import CsrMatrix, StencilSpec, diagonal_scale, generate_stencil

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_spd(rng, n, cond=100.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.geomspace(1.0, cond, n)
    return (q * eig) @ q.T


def random_well_conditioned(rng, n):
    return np.eye(n) * n + rng.standard_normal((n, n))


@pytest.fixture(scope="session")
def hpcg444():
    A = generate_stencil(StencilSpec(4, 4, 4))
    b = np.random.Generator(np.random.PCG64(0)).random(A.n)
    return diagonal_scale(A, b)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense(A: CsrMatrix):
    return A.to_dense().astype(np.float64)
