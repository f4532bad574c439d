import numpy as np
import pytest

from chow_balance.embedded_variety import (LatticePolytope, MonomialEmbedding, PointConfiguration,
                                           build_grid, sqrt_binomial)
from chow_balance.torus_action import build_torus


def veronese(k, coefficients=None):
    return MonomialEmbedding.from_polytope(LatticePolytope([[0], [k]]), coefficients)


@pytest.fixture(scope="session")
def grid1():
    return build_grid(1, 64, 64)


@pytest.fixture(scope="session")
def grid1_small():
    return build_grid(1, 32, 16)


@pytest.fixture
def p1o2_balanced():
    return veronese(2, sqrt_binomial(2))


@pytest.fixture
def three_points():
    return PointConfiguration([[1, 0], [0, 1], [0, 1]]), build_torus([1, -1])


@pytest.fixture
def coincident():
    return PointConfiguration([[1, 0, 0]] * 3), build_torus([0, 0, 1])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
