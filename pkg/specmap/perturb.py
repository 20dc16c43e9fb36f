"""Subgraph, rewiring and relabeling generators.

Every generator returns the new graph together with the provenance needed
to compare it to its parent: a `NodeCorrespondence` for partiality and
relabeling, a `PerturbationRecord` for rewiring. Randomized generators take
an explicit seed so experiment runs are reproducible.
"""
import logging
import math
from collections import deque
from collections.abc import Collection, Hashable, Iterable, Mapping
from os import PathLike
from pathlib import Path
from typing import Any

import attrs
import networkx as nx
import numpy as np

from .exceptions import (
    EdgeListParseError,
    EmptySubgraphError,
    GraphError,
    NodeSetMismatchError,
    RewireError,
)
from .graph import Graph, NodeCorrespondence, NodeId, node_sort_key, parse_node

__all__ = (
    "PerturbationRecord",
    "round_half_up",
    "induced_subgraph",
    "largest_component",
    "khop_subgraph",
    "khop_for_fraction",
    "holes_subgraph",
    "holes_for_fraction",
    "class_subgraph",
    "load_node_labels",
    "rewire",
    "edit_fraction",
    "permute_graph",
    "hop_limit_for_diameter",
)

logger = logging.getLogger(__name__)

type Edge = tuple[NodeId, NodeId]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _edge_tuples(edges: Iterable[Iterable[NodeId]]) -> tuple[Edge, ...]:
    return tuple(tuple(e) for e in edges)


@attrs.frozen
class PerturbationRecord:
    """Edges removed and added by one same-count rewiring."""

    removed_edges: tuple[Edge, ...] = attrs.field(converter=_edge_tuples)
    added_edges: tuple[Edge, ...] = attrs.field(converter=_edge_tuples)
    fraction: float = attrs.field(converter=float)

    @fraction.validator
    def _check_fraction(self, attribute, value):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"fraction must lie in [0, 1], got {value}")

    def __attrs_post_init__(self):
        if len(self.removed_edges) != len(self.added_edges):
            raise ValueError("rewiring must remove and add the same number of edges")

    def to_dict(self) -> dict[str, Any]:
        """Convert to the JSON record layout."""
        return {
            "removed": [list(e) for e in self.removed_edges],
            "added": [list(e) for e in self.added_edges],
            "fraction": self.fraction,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PerturbationRecord":
        return cls(data["removed"], data["added"], data["fraction"])


def _ball(g: Graph, source: int, radius: int | None) -> list[int]:
    """Positions reachable from ``source`` within ``radius`` hops, in BFS order."""
    seen = {source}
    order = [source]
    queue = deque([(source, 0)])
    while queue:
        i, depth = queue.popleft()
        if radius is not None and depth == radius:
            continue
        for j in g.adjacency[i]:
            if j not in seen:
                seen.add(j)
                order.append(j)
                queue.append((j, depth + 1))
    return order


def induced_subgraph(g: Graph, keep: Iterable[NodeId]) -> tuple[Graph, NodeCorrespondence]:
    """Subgraph induced on ``keep``, preserving the parent's node order.

    Raises:
        EmptySubgraphError: nothing is kept
    """
    positions = sorted({g.position(node) for node in keep})
    if not positions:
        raise EmptySubgraphError("induced subgraph has no nodes")

    remap = {old: new for new, old in enumerate(positions)}
    adjacency = [[remap[j] for j in g.adjacency[i] if j in remap] for i in positions]
    sub = Graph([g.node_ids[i] for i in positions], adjacency)
    return sub, NodeCorrespondence(positions, g.n)


def _with_largest_component(
        g: Graph,
        sub: Graph,
        corr: NodeCorrespondence,
        enabled: bool,
) -> tuple[Graph, NodeCorrespondence]:
    if not enabled:
        return sub, corr
    lcc, inner = largest_component(sub)
    return lcc, corr.compose(inner)


def largest_component(g: Graph) -> tuple[Graph, NodeCorrespondence]:
    """Largest connected component; ties go to the component holding the lowest position."""
    components = [sorted(c) for c in nx.connected_components(_index_graph(g))]
    best = max(components, key=lambda c: (len(c), -c[0]))
    if len(best) == g.n:
        return g, NodeCorrespondence.identity(g.n)
    return induced_subgraph(g, (g.node_ids[i] for i in best))


def _index_graph(g: Graph) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(g.n))
    graph.add_edges_from(g.edge_index)
    return graph


def khop_subgraph(
        g: Graph,
        seed: NodeId,
        target_size: int,
        *,
        largest_component: bool = False,
) -> tuple[Graph, NodeCorrespondence]:
    """Patch partiality: the BFS ball around ``seed`` cut to exactly ``target_size`` nodes.

    Each BFS level is visited in ascending node-id order and the last level is
    truncated in that order, so the result is deterministic.

    Raises:
        GraphError: ``target_size`` outside ``[1, n]`` or larger than the seed's component
        UnknownNodeError: unknown seed
    """
    if not 1 <= target_size <= g.n:
        raise GraphError(f"target_size must lie in [1, {g.n}], got {target_size}")

    ids = g.node_ids
    start = g.position(seed)
    chosen = [start]
    visited = {start}
    frontier = [start]

    while len(chosen) < target_size:
        level = {j for i in frontier for j in g.adjacency[i] if j not in visited}
        if not level:
            raise GraphError(
                f"component of seed {seed!r} has {len(chosen)} nodes, fewer than target_size={target_size}"
            )
        frontier = sorted(level, key=lambda j: node_sort_key(ids[j]))
        frontier = frontier[:target_size - len(chosen)]
        chosen.extend(frontier)
        visited.update(frontier)

    sub, corr = induced_subgraph(g, (ids[i] for i in chosen))
    return _with_largest_component(g, sub, corr, largest_component)


def khop_for_fraction(
        g: Graph,
        keep_fraction: float,
        rng_seed: int,
        *,
        largest_component: bool = False,
) -> tuple[Graph, NodeCorrespondence]:
    """Patch partiality keeping ``round(keep_fraction·n)`` nodes around a random seed node.

    The seed is drawn among nodes whose component is large enough.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise GraphError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")

    size = max(1, round_half_up(keep_fraction * g.n))
    eligible = sorted(i for c in nx.connected_components(_index_graph(g)) if len(c) >= size for i in c)
    if not eligible:
        raise GraphError(f"no component has {size} nodes")

    rng = np.random.default_rng(rng_seed)
    seed = g.node_ids[eligible[rng.integers(len(eligible))]]
    return khop_subgraph(g, seed, size, largest_component=largest_component)


def holes_subgraph(
        g: Graph,
        centers: Collection[NodeId],
        *,
        largest_component: bool = False,
) -> tuple[Graph, NodeCorrespondence]:
    """Holes partiality: drop each center together with its 1-hop neighbors.

    Raises:
        EmptySubgraphError: every node was removed
        UnknownNodeError: unknown center
    """
    removed: set[int] = set()
    for node in centers:
        i = g.position(node)
        removed.add(i)
        removed.update(g.adjacency[i])

    keep = [g.node_ids[i] for i in range(g.n) if i not in removed]
    if not keep:
        raise EmptySubgraphError(f"removing the neighborhoods of {len(centers)} center(s) empties the graph")

    sub, corr = induced_subgraph(g, keep)
    return _with_largest_component(g, sub, corr, largest_component)


def holes_for_fraction(
        g: Graph,
        keep_fraction: float,
        rng_seed: int,
        *,
        largest_component: bool = False,
) -> tuple[Graph, NodeCorrespondence]:
    """Punch random holes until at most ``round(keep_fraction·n)`` nodes survive.

    Centers are drawn one at a time among the surviving nodes.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise GraphError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")

    target = round_half_up(keep_fraction * g.n)
    rng = np.random.default_rng(rng_seed)
    alive = set(range(g.n))
    centers = []

    while len(alive) > target:
        candidates = sorted(alive)
        c = candidates[rng.integers(len(candidates))]
        alive.discard(c)
        alive.difference_update(g.adjacency[c])
        centers.append(g.node_ids[c])

    if not alive:
        raise EmptySubgraphError(f"holes for keep_fraction={keep_fraction} empty the graph")

    return holes_subgraph(g, centers, largest_component=largest_component)


def class_subgraph(
        g: Graph,
        labels: Mapping[NodeId, Hashable],
        keep_classes: Collection[Hashable],
        *,
        largest_component: bool = False,
) -> tuple[Graph, NodeCorrespondence]:
    """Semantic partiality: the subgraph induced on nodes whose label is in ``keep_classes``."""
    keep = [node for node in g.node_ids if labels.get(node) in keep_classes]
    if not keep:
        raise EmptySubgraphError(f"no node carries a label in {sorted(map(str, keep_classes))}")
    sub, corr = induced_subgraph(g, keep)
    return _with_largest_component(g, sub, corr, largest_component)


def load_node_labels(path: str | PathLike) -> dict[NodeId, str]:
    """Read ``node label`` lines; ``#`` lines are comments."""
    labels = {}
    with Path(path).open() as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise EdgeListParseError(f"expected 'node label', got {line!r}", line_number=line_number)
            node, label = parts
            labels[parse_node(node)] = label
    return labels


def rewire(
        g: Graph,
        fraction: float,
        rng_seed: int,
        max_hop: int | None = None,
) -> tuple[Graph, PerturbationRecord]:
    """Remove ``r = round(fraction·m)`` random edges and add ``r`` random absent ones.

    With ``max_hop``, each added edge joins an endpoint of a removed edge to a
    node within ``max_hop`` hops of it in the original graph. Absent edges are
    drawn by rejection sampling, capped at ``100·r`` attempts.

    Raises:
        RewireError: bad fraction, ``r == 0``, or not enough absent edges
    """
    if not 0.0 < fraction <= 1.0:
        raise RewireError(f"fraction must lie in (0, 1], got {fraction}")

    r = round_half_up(fraction * g.m)
    if r < 1:
        raise RewireError(f"fraction={fraction} of {g.m} edges rewires no edge")

    absent = g.n * (g.n - 1) // 2 - g.m
    if absent < r:
        raise RewireError(f"cannot add {r} edges: only {absent} absent edges")

    rng = np.random.default_rng(rng_seed)
    edge_index = g.edge_index
    removed = [edge_index[i] for i in sorted(rng.choice(g.m, size=r, replace=False))]

    original = set(edge_index)
    added: list[tuple[int, int]] = []
    added_set: set[tuple[int, int]] = set()

    anchors = sorted({i for e in removed for i in e})
    balls: dict[int, list[int]] = {}
    attempts = 0

    while len(added) < r:
        if attempts >= 100 * r:
            raise RewireError(f"found {len(added)} of {r} absent edges after {attempts} attempts")
        attempts += 1

        if max_hop is None:
            i, j = (int(x) for x in rng.integers(0, g.n, size=2))
        else:
            i = anchors[rng.integers(len(anchors))]
            if i not in balls:
                balls[i] = _ball(g, i, max_hop)[1:]
            if not balls[i]:
                continue
            j = balls[i][rng.integers(len(balls[i]))]

        if i == j:
            continue
        e = (min(i, j), max(i, j))
        if e in original or e in added_set:
            continue
        added.append(e)
        added_set.add(e)

    logger.debug("Rewired %d of %d edges in %d attempts", r, g.m, attempts)

    kept = original.difference(removed)
    ids = g.node_ids
    rewired = Graph.from_edges(ids, ((ids[i], ids[j]) for i, j in sorted(kept | added_set)))
    record = PerturbationRecord(
        [(ids[i], ids[j]) for i, j in removed],
        [(ids[i], ids[j]) for i, j in added],
        fraction,
    )
    return rewired, record


def edit_fraction(g: Graph, g2: Graph) -> float:
    """Edge edit distance ``(|E − E′| + |E′ − E|) / |E|``.

    Raises:
        NodeSetMismatchError: the graphs do not share a node set
    """
    if set(g.node_ids) != set(g2.node_ids):
        raise NodeSetMismatchError("edit fraction needs graphs on the same node set")
    if g.m == 0:
        raise GraphError("edit fraction is undefined for a graph without edges")
    return len(g.edge_set ^ g2.edge_set) / g.m


def permute_graph(
        g: Graph,
        rng_seed: int | None = None,
        *,
        permutation: Iterable[int] | None = None,
        relabel: bool = True,
) -> tuple[Graph, NodeCorrespondence]:
    """Isomorphic copy of ``g`` under a node permutation.

    Position ``j`` of the result is old position ``permutation[j]``. With
    ``relabel`` the new ids are the positions ``0..n−1``, otherwise the old ids
    travel with their nodes. The correspondence maps the copy back onto ``g``.
    """
    if permutation is None:
        perm = np.random.default_rng(rng_seed).permutation(g.n)
    else:
        perm = np.asarray(list(permutation), dtype=np.int64)
        if sorted(perm.tolist()) != list(range(g.n)):
            raise GraphError(f"not a permutation of {g.n} positions")

    inverse = np.empty(g.n, dtype=np.int64)
    inverse[perm] = np.arange(g.n)

    node_ids = list(range(g.n)) if relabel else [g.node_ids[p] for p in perm]
    adjacency = [sorted(int(inverse[j]) for j in g.adjacency[p]) for p in perm]
    return Graph(node_ids, adjacency), NodeCorrespondence(perm, g.n)


def hop_limit_for_diameter(g: Graph, fraction: float = 0.01) -> int:
    """Hop radius for local rewiring: ``max(2, ceil(fraction · diameter))`` of the largest component.

    One hop only reaches existing edges, so the radius never drops below two.
    """
    lcc, _ = largest_component(g)
    diameter = nx.diameter(_index_graph(lcc)) if lcc.n > 1 else 0
    return max(2, math.ceil(fraction * diameter))
