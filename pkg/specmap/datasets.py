"""Bundled and synthetic graphs.

Karate ships with the package; the synthetic generators stand in for the
larger benchmark graphs, which are not redistributed.
"""
import importlib.resources
import logging
from collections.abc import Callable
from typing import Any

import networkx as nx

from .exceptions import ConfigError
from .graph import Graph, parse_edge_list
from .perturb import largest_component

__all__ = (
    "karate",
    "random_geometric",
    "planted_partition",
    "path",
    "grid",
    "DATASETS",
    "load_dataset",
)

logger = logging.getLogger(__name__)


def karate() -> Graph:
    """Zachary's karate club (34 nodes, 78 edges); position i is member i."""
    with importlib.resources.files("specmap").joinpath("data/karate.txt").open() as f:
        g = parse_edge_list(f)
    return Graph.from_edges(sorted(g.node_ids), g.edges)


def random_geometric(n: int = 1000, radius: float = 0.06, seed: int = 0, dim: int = 2) -> Graph:
    """Random geometric graph in the unit cube."""
    return Graph.from_networkx(nx.random_geometric_graph(n, radius, dim=dim, seed=seed))


def planted_partition(
        groups: int = 5,
        group_size: int = 100,
        p_in: float = 0.1,
        p_out: float = 0.005,
        seed: int = 0,
) -> Graph:
    """Planted-partition community graph with ``groups × group_size`` nodes."""
    return Graph.from_networkx(nx.planted_partition_graph(groups, group_size, p_in, p_out, seed=seed))


def path(n: int = 10) -> Graph:
    return Graph.from_networkx(nx.path_graph(n))


def grid(rows: int = 10, cols: int = 10) -> Graph:
    """2-D lattice with integer ids in row-major order."""
    return Graph.from_networkx(nx.convert_node_labels_to_integers(nx.grid_2d_graph(rows, cols), ordering="sorted"))


DATASETS: dict[str, Callable[..., Graph]] = {
    "karate": karate,
    "random_geometric": random_geometric,
    "planted_partition": planted_partition,
    "path": path,
    "grid": grid,
}


def load_dataset(name: str, params: dict[str, Any] | None = None, *, largest_component_only: bool = False) -> Graph:
    """Build a bundled dataset by name.

    Raises:
        ConfigError: unknown name or parameters the generator does not take
    """
    try:
        factory = DATASETS[name]
    except KeyError:
        raise ConfigError(f"unknown dataset {name!r}; choose from {', '.join(sorted(DATASETS))}") from None

    try:
        graph = factory(**(params or {}))
    except TypeError as e:
        raise ConfigError(f"bad parameters for dataset {name!r}: {e}") from None

    if largest_component_only:
        lcc, _ = largest_component(graph)
        if lcc.n < graph.n:
            logger.info("Dataset %s: kept largest component, %d of %d nodes", name, lcc.n, graph.n)
        graph = lcc

    logger.debug("Dataset %s: %r", name, graph)
    return graph
