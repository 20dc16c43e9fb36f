"""Custom exceptions.
"""

__all__ = (
    "SpecmapError",
    "GraphError",
    "EdgeListParseError",
    "SelfLoopError",
    "EmptyGraphError",
    "UnknownNodeError",
    "EmptySubgraphError",
    "RewireError",
    "NodeSetMismatchError",
    "IsolatedNodeError",
    "CorrespondenceError",
    "DimensionMismatchError",
    "NumericalError",
    "NotSymmetricError",
    "ConvergenceError",
    "RankDeficientError",
    "ConfigError",
    "ContainerFormatError",
    "IsolatedNodeWarning",
)


class SpecmapError(Exception):
    """Base exception for all specmap errors."""
    pass


class GraphError(SpecmapError):
    """Invalid graph input or generator request."""
    pass


class EdgeListParseError(GraphError):
    """Malformed line in an edge-list file."""

    def __init__(self, message: str, *, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class SelfLoopError(GraphError):
    """Edge joining a node to itself."""
    pass


class EmptyGraphError(GraphError):
    """Graph without nodes."""
    pass


class UnknownNodeError(GraphError, KeyError):
    """Node id not present in the graph."""

    def __str__(self):
        return Exception.__str__(self)


class EmptySubgraphError(GraphError):
    """A partiality generator removed every node."""
    pass


class RewireError(GraphError):
    """Rewiring request that cannot be satisfied."""
    pass


class NodeSetMismatchError(GraphError):
    """Two graphs compared edge-wise do not share a node set."""
    pass


class IsolatedNodeError(GraphError):
    """Operation undefined on graphs with degree-0 nodes."""
    pass


class CorrespondenceError(SpecmapError):
    """Node correspondence that is not a partial injective map."""
    pass


class DimensionMismatchError(SpecmapError, ValueError):
    """Matrix or signal shapes that do not agree."""
    pass


class NumericalError(SpecmapError):
    """General numerical failure."""
    pass


class NotSymmetricError(NumericalError):
    """Operator expected to be symmetric is not."""
    pass


class ConvergenceError(NumericalError):
    """Iterative solver did not reach the requested accuracy."""
    pass


class RankDeficientError(NumericalError):
    """Singular least-squares system with no regularization."""
    pass


class ConfigError(SpecmapError):
    """Invalid experiment configuration."""
    pass


class ContainerFormatError(SpecmapError):
    """Unreadable matrix, basis or record file."""
    pass


class IsolatedNodeWarning(UserWarning):
    """Normalized Laplacian completed on degree-0 nodes."""
    pass
