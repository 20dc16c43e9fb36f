import networkx as nx
import numpy as np
import pytest

from specmap.datasets import karate, path
from specmap.graph import Graph
from specmap.perturb import khop_subgraph
from specmap.spectral import graph_eigenbasis


def connected_graph(n: int, seed: int) -> Graph:
    """Connected small-world graph; a rich, seed-stable test input."""
    return Graph.from_networkx(nx.connected_watts_strogatz_graph(n, 4, 0.3, seed=seed))


@pytest.fixture(scope="session")
def karate_graph() -> Graph:
    return karate()


@pytest.fixture(scope="session")
def path11() -> Graph:
    return path(11)


@pytest.fixture
def triangle() -> Graph:
    return Graph.from_edges([0, 1, 2], [(0, 1), (1, 2), (2, 0)])


@pytest.fixture(scope="session")
def karate_patch(karate_graph):
    """17-node khop patch around node 0 and its correspondence."""
    return khop_subgraph(karate_graph, 0, 17)


@pytest.fixture(scope="session")
def karate_full_bases(karate_graph, karate_patch):
    sub, _ = karate_patch
    return graph_eigenbasis(karate_graph, karate_graph.n), graph_eigenbasis(sub, sub.n)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
