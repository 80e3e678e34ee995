import numpy as np
import pytest

from cliquesense import pod


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_basis(rng, n=60, m=30, r=6, grid_shape=None):
    X = pod.DataMatrix(rng.standard_normal((n, m)), grid_shape=grid_shape)
    basis, _ = pod.pod_basis(X, r=r)
    return basis


def low_rank(rng, n, m, r, grid_shape=None):
    A = rng.standard_normal((n, r)) @ np.diag(np.linspace(3.0, 1.0, r)) @ rng.standard_normal((r, m))
    return pod.DataMatrix(A, grid_shape=grid_shape)


# verdict lines from test_acceptance.py, repeated in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
