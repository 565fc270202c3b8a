import sys

import numpy as np
import pytest

from frozencsp.core import EssentialHypergraph
from frozencsp.model import hypergraph_2col, nae_sat


@pytest.fixture(scope="session")
def col3():
    return hypergraph_2col(3)


@pytest.fixture(scope="session")
def col4():
    return hypergraph_2col(4)


@pytest.fixture(scope="session")
def nae3():
    return nae_sat(3)


def make_gamma(n, edges, essential, signs=None):
    signs = np.ones(n, dtype=np.int8) if signs is None else np.asarray(signs, dtype=np.int8)
    edges = np.asarray(edges, dtype=np.int32).reshape(len(edges), -1)
    return EssentialHypergraph(n, signs, edges, np.asarray(essential, dtype=np.int32),
                               np.full(len(edges), -1, dtype=np.int32))


@pytest.fixture
def chain_gamma():
    """Vertices 0..4; (0,1,2) with 0 essential, (2,3,4) with 2 essential."""
    return make_gamma(5, [(0, 1, 2), (2, 3, 4)], [0, 2])


@pytest.fixture
def triangle_gamma():
    """Three copies of (0,1,2) with essential vertices 0, 1, 2."""
    return make_gamma(3, [(0, 1, 2), (0, 1, 2), (0, 1, 2)], [0, 1, 2])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
