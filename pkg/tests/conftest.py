import networkx as nx
import numpy as np
import pytest

from gritkit.graph import NAMED_CORPUS, from_pairs, named_graph, sample_connected


def to_nx(g):
    h = nx.DiGraph() if g.directed else nx.Graph()
    h.add_nodes_from(range(g.n))
    h.add_edges_from(g.edges())
    return h


def from_nx(h):
    mapping = {v: i for i, v in enumerate(sorted(h.nodes()))}
    return from_pairs(len(mapping), [(mapping[u], mapping[v]) for u, v in h.edges()])


def random_connected_corpus(count=50, seed=7, max_n=25):
    """Mixed-density connected graphs with 2..max_n nodes."""
    out = []
    for i in range(count):
        n = 2 + (i * 7 + seed) % (max_n - 1)
        p = (0.05, 0.15, 0.4)[i % 3]
        out.append(sample_connected(n, p, seed * 1000 + i))
    return out


@pytest.fixture(scope="session")
def named_corpus():
    return {name: named_graph(name) for name in NAMED_CORPUS}


@pytest.fixture(scope="session")
def random_corpus():
    return random_connected_corpus()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
