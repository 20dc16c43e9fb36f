"""Graphs, node correspondences and Laplacians.

Graphs are undirected and unweighted. Nodes carry opaque hashable ids and
are addressed internally by their position in ``Graph.node_ids``; adjacency
is kept as sorted neighbor-index tuples and sparse matrices are built on
demand.
"""
import logging
import warnings
from collections.abc import Hashable, Iterable, Mapping
from functools import cached_property
from os import PathLike
from pathlib import Path

import attrs
import networkx as nx
import numpy as np
import scipy.sparse as sp

from .exceptions import (
    CorrespondenceError,
    DimensionMismatchError,
    EdgeListParseError,
    EmptyGraphError,
    GraphError,
    IsolatedNodeWarning,
    NumericalError,
    SelfLoopError,
    UnknownNodeError,
)

__all__ = (
    "NodeId",
    "Graph",
    "NodeCorrespondence",
    "SignalMatrix",
    "node_sort_key",
    "parse_node",
    "load_edge_list",
    "parse_edge_list",
    "normalized_laplacian",
    "combinatorial_laplacian",
    "laplacian",
)

logger = logging.getLogger(__name__)

type NodeId = Hashable


def node_sort_key(node: NodeId) -> tuple:
    """Deterministic ordering for mixed node ids: integers numerically, then the rest by text."""
    if isinstance(node, (int, np.integer)) and not isinstance(node, bool):
        return 0, int(node), ""
    return 1, 0, str(node)


def parse_node(token: str) -> NodeId:
    """Integer-looking tokens become ints; anything else stays an opaque string id."""
    try:
        return int(token)
    except ValueError:
        return token


@attrs.frozen(slots=False)
class Graph:
    """Undirected unweighted graph with stable node ids.

    Use `Graph.from_edges()` rather than the raw constructor.
    """

    node_ids: tuple[NodeId, ...] = attrs.field(converter=tuple)
    adjacency: tuple[tuple[int, ...], ...] = attrs.field(converter=lambda rows: tuple(tuple(r) for r in rows))

    def __attrs_post_init__(self):
        if len(self.adjacency) != len(self.node_ids):
            raise GraphError("adjacency must have one row per node")
        if len(set(self.node_ids)) != len(self.node_ids):
            raise GraphError("duplicate node ids")

        n = len(self.node_ids)
        for i, row in enumerate(self.adjacency):
            if any(b <= a for a, b in zip(row, row[1:])):
                raise GraphError(f"neighbors of node {self.node_ids[i]!r} must be sorted and unique")
            if i in row:
                raise SelfLoopError(f"self-loop on node {self.node_ids[i]!r}")
            for j in row:
                if not 0 <= j < n:
                    raise GraphError(f"neighbor index {j} out of range")

        if any(i not in self.adjacency[j] for i, row in enumerate(self.adjacency) for j in row):
            raise GraphError("adjacency is not symmetric")

    @classmethod
    def from_edges(cls, node_ids: Iterable[NodeId], edges: Iterable[tuple[NodeId, NodeId]]) -> "Graph":
        """Build a graph from node ids and (u, v) id pairs.

        Duplicate and reversed pairs collapse to one undirected edge.

        Raises:
            SelfLoopError: an edge joins a node to itself
            UnknownNodeError: an endpoint is not among ``node_ids``
        """
        node_ids = tuple(node_ids)
        index = {node: i for i, node in enumerate(node_ids)}
        neighbors: list[set[int]] = [set() for _ in node_ids]

        for u, v in edges:
            if u == v:
                raise SelfLoopError(f"self-loop on node {u!r}")
            try:
                i, j = index[u], index[v]
            except KeyError as e:
                raise UnknownNodeError(f"edge endpoint {e.args[0]!r} is not a listed node") from None
            neighbors[i].add(j)
            neighbors[j].add(i)

        return cls(node_ids, [sorted(row) for row in neighbors])

    @classmethod
    def from_networkx(cls, graph: nx.Graph) -> "Graph":
        """Convert a simple networkx graph, keeping its node order."""
        if graph.is_directed():
            raise GraphError("directed graphs are not supported")
        return cls.from_edges(list(graph.nodes), ((u, v) for u, v in graph.edges if u != v))

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(self.node_ids)
        graph.add_edges_from(self.edges)
        return graph

    @property
    def n(self) -> int:
        return len(self.node_ids)

    @cached_property
    def m(self) -> int:
        return sum(len(row) for row in self.adjacency) // 2

    @cached_property
    def index(self) -> Mapping[NodeId, int]:
        """Node id to position."""
        return {node: i for i, node in enumerate(self.node_ids)}

    @cached_property
    def edge_index(self) -> tuple[tuple[int, int], ...]:
        """Edges as (i, j) position pairs with i < j, sorted."""
        return tuple((i, j) for i, row in enumerate(self.adjacency) for j in row if i < j)

    @cached_property
    def edges(self) -> tuple[tuple[NodeId, NodeId], ...]:
        """Edges as id pairs, in `edge_index` order."""
        ids = self.node_ids
        return tuple((ids[i], ids[j]) for i, j in self.edge_index)

    @cached_property
    def edge_set(self) -> frozenset[frozenset[NodeId]]:
        """Edges as unordered id pairs."""
        return frozenset(frozenset(e) for e in self.edges)

    @cached_property
    def degrees(self) -> np.ndarray:
        degrees = np.fromiter((len(row) for row in self.adjacency), dtype=np.int64, count=self.n)
        degrees.flags.writeable = False
        return degrees

    def position(self, node: NodeId) -> int:
        """Position of a node id.

        Raises:
            UnknownNodeError: the id is not in the graph
        """
        try:
            return self.index[node]
        except KeyError:
            raise UnknownNodeError(f"unknown node {node!r}") from None

    def has_node(self, node: NodeId) -> bool:
        return node in self.index

    def has_edge(self, u: NodeId, v: NodeId) -> bool:
        i, j = self.position(u), self.position(v)
        return j in self.adjacency[i]

    def neighbors(self, node: NodeId) -> tuple[NodeId, ...]:
        return tuple(self.node_ids[j] for j in self.adjacency[self.position(node)])

    def adjacency_matrix(self) -> sp.csr_array:
        """Symmetric binary adjacency as a CSR array."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        cols = np.fromiter((j for row in self.adjacency for j in row), dtype=np.int64, count=int(self.degrees.sum()))
        data = np.ones(len(cols), dtype=np.float64)
        return sp.csr_array((data, (rows, cols)), shape=(self.n, self.n))

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def _as_matrix(values) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2:
        raise DimensionMismatchError(f"signal must be 1-D or 2-D, got {array.ndim}-D")
    array.flags.writeable = False
    return array


@attrs.frozen(slots=False, eq=False)
class SignalMatrix:
    """Real n×d feature matrix, one row per node (d functions ``f : V → ℝ``)."""

    values: np.ndarray = attrs.field(converter=_as_matrix)
    node_ids: tuple[NodeId, ...] | None = attrs.field(default=None, converter=attrs.converters.optional(tuple))

    def __attrs_post_init__(self):
        if not np.isfinite(self.values).all():
            raise NumericalError("signal entries must be finite")
        if self.node_ids is not None and len(self.node_ids) != self.values.shape[0]:
            raise DimensionMismatchError(f"{self.values.shape[0]} signal rows for {len(self.node_ids)} nodes")

    @classmethod
    def of(cls, graph: Graph, values) -> "SignalMatrix":
        """Signal aligned with ``graph``'s node order."""
        return cls(values, graph.node_ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@attrs.frozen(slots=False)
class NodeCorrespondence:
    """Partial injective map from the nodes of G₂ into the nodes of G₁.

    ``target[j]`` is the G₁ position matched to G₂ position ``j``.
    """

    target: tuple[int, ...] = attrs.field(converter=lambda t: tuple(int(x) for x in t))
    n1: int = attrs.field(converter=int)

    def __attrs_post_init__(self):
        if any(not 0 <= t < self.n1 for t in self.target):
            raise CorrespondenceError(f"target positions must lie in [0, {self.n1})")
        if len(set(self.target)) != len(self.target):
            raise CorrespondenceError("correspondence is not injective: two G₂ nodes share a G₁ node")

    @classmethod
    def identity(cls, n: int) -> "NodeCorrespondence":
        return cls(range(n), n)

    @classmethod
    def from_pairs(cls, g1: Graph, g2: Graph, pairs: Mapping[NodeId, NodeId]) -> "NodeCorrespondence":
        """Build from a ``{g2_node: g1_node}`` mapping covering every G₂ node."""
        missing = [node for node in g2.node_ids if node not in pairs]
        if missing:
            raise CorrespondenceError(f"{len(missing)} G₂ nodes have no match, e.g. {missing[0]!r}")
        return cls((g1.position(pairs[node]) for node in g2.node_ids), g1.n)

    @property
    def n2(self) -> int:
        return len(self.target)

    @cached_property
    def targets(self) -> np.ndarray:
        targets = np.asarray(self.target, dtype=np.int64)
        targets.flags.writeable = False
        return targets

    def pairs(self, g1: Graph, g2: Graph) -> dict[NodeId, NodeId]:
        """The map as ``{g2_node: g1_node}``."""
        return {g2.node_ids[j]: g1.node_ids[t] for j, t in enumerate(self.target)}

    def matrix(self) -> sp.csr_array:
        """Binary |V₁|×|V₂| matrix: each column sums to 1, each row to at most 1."""
        return self.pullback_matrix().T.tocsr()

    def pullback_matrix(self) -> sp.csr_array:
        """Binary |V₂|×|V₁| operator taking functions on G₁ to functions on G₂."""
        data = np.ones(self.n2, dtype=np.float64)
        return sp.csr_array((data, (np.arange(self.n2), self.targets)), shape=(self.n2, self.n1))

    def compose(self, inner: "NodeCorrespondence") -> "NodeCorrespondence":
        """``self ∘ inner``: maps inner's source nodes through both correspondences."""
        if inner.n1 != self.n2:
            raise CorrespondenceError(f"cannot compose: inner maps into {inner.n1} nodes, outer starts from {self.n2}")
        return NodeCorrespondence(self.targets[inner.targets], self.n1)

    def inverse(self) -> "NodeCorrespondence":
        """Inverse of a bijective correspondence."""
        if self.n1 != self.n2:
            raise CorrespondenceError("only bijective correspondences can be inverted")
        inverse = np.empty(self.n2, dtype=np.int64)
        inverse[self.targets] = np.arange(self.n2)
        return NodeCorrespondence(inverse, self.n2)


def parse_edge_list(lines: Iterable[str]) -> Graph:
    """Parse whitespace-separated ``u v`` lines; ``#`` starts a comment line.

    Node ids are ordered by first appearance; decimal tokens become ints.
    """
    node_ids: dict[NodeId, None] = {}
    edges: list[tuple[NodeId, NodeId]] = []

    for line_number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue

        parts = line.split()
        if len(parts) != 2:
            raise EdgeListParseError(f"expected 'u v', got {line!r}", line_number=line_number)

        u, v = (parse_node(p) for p in parts)
        if u == v:
            raise SelfLoopError(f"line {line_number}: self-loop on node {u!r}")

        node_ids.setdefault(u)
        node_ids.setdefault(v)
        edges.append((u, v))

    if not node_ids:
        raise EmptyGraphError("edge list contains no edges")

    return Graph.from_edges(node_ids, edges)


def load_edge_list(path: str | PathLike) -> Graph:
    """Load a graph from an edge-list text file.

    Raises:
        EdgeListParseError: malformed line (message carries the line number)
        SelfLoopError: a ``u u`` line
        EmptyGraphError: no edges in the file
    """
    with Path(path).open() as f:
        graph = parse_edge_list(f)
    logger.debug("Loaded %r from %s", graph, path)
    return graph


def normalized_laplacian(g: Graph) -> sp.csr_array:
    """Symmetric normalized Laplacian ``I − D^{−1/2} A D^{−1/2}``.

    Degree-0 nodes get ``D^{−1/2}(i, i) = 0``, so their row is the standard
    basis row ``e_i``; an `IsolatedNodeWarning` is emitted when that happens.
    """
    degrees = g.degrees.astype(np.float64)
    isolated = degrees == 0
    if isolated.any():
        warnings.warn(
            f"{int(isolated.sum())} isolated node(s); their normalized Laplacian rows are set to e_i",
            IsolatedNodeWarning,
            stacklevel=2,
        )

    inv_sqrt = np.zeros_like(degrees)
    inv_sqrt[~isolated] = 1.0 / np.sqrt(degrees[~isolated])
    scale = sp.diags_array(inv_sqrt)
    lap = sp.eye_array(g.n, format="csr") - scale @ g.adjacency_matrix() @ scale
    return sp.csr_array(lap)


def combinatorial_laplacian(g: Graph) -> sp.csr_array:
    """Standard Laplacian ``D − A``."""
    lap = sp.diags_array(g.degrees.astype(np.float64)) - g.adjacency_matrix()
    return sp.csr_array(lap)


def laplacian(g: Graph, kind: str = "normalized") -> sp.csr_array:
    """Laplacian by kind name: ``normalized`` or ``combinatorial``."""
    match kind:
        case "normalized":
            return normalized_laplacian(g)
        case "combinatorial":
            return combinatorial_laplacian(g)
    raise ValueError(f"unknown Laplacian kind {kind!r}")
