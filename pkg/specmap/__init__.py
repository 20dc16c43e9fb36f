"""specmap - spectral maps between graphs and their subgraphs.
"""
from importlib.metadata import version

from .graph import Graph, NodeCorrespondence, SignalMatrix, load_edge_list, laplacian
from .perturb import PerturbationRecord, khop_subgraph, holes_subgraph, rewire, edit_fraction, permute_graph
from .spectral import Eigenbasis, KSpec, eigendecompose, graph_eigenbasis, rw_positional_encoding
from .fmap import (
    SpectralMap,
    compute_spectral_map,
    transfer_signal,
    normalize_signal,
    rmse,
    map_distance,
    gaussian_noise_map,
    distillation_loss,
)
from .matching import (
    DescriptorSet,
    RegularizerConfig,
    CandidateRanking,
    band_limited_indicator,
    estimate_map,
    slanted_mask,
    recover_node_map,
    zoomout_refine,
    mean_average_precision,
)
from .experiments import ExperimentConfig, ResultTable, load_config
from .exceptions import (
    SpecmapError,
    GraphError,
    CorrespondenceError,
    DimensionMismatchError,
    NumericalError,
    ConfigError,
)

__version__ = version("specmap")

__all__ = (
    # Graphs
    "Graph",
    "NodeCorrespondence",
    "SignalMatrix",
    "load_edge_list",
    "laplacian",
    # Perturbations
    "PerturbationRecord",
    "khop_subgraph",
    "holes_subgraph",
    "rewire",
    "edit_fraction",
    "permute_graph",
    # Spectral
    "Eigenbasis",
    "KSpec",
    "eigendecompose",
    "graph_eigenbasis",
    "rw_positional_encoding",
    # Maps
    "SpectralMap",
    "compute_spectral_map",
    "transfer_signal",
    "normalize_signal",
    "rmse",
    "map_distance",
    "gaussian_noise_map",
    "distillation_loss",
    # Matching
    "DescriptorSet",
    "RegularizerConfig",
    "CandidateRanking",
    "band_limited_indicator",
    "estimate_map",
    "slanted_mask",
    "recover_node_map",
    "zoomout_refine",
    "mean_average_precision",
    # Experiments
    "ExperimentConfig",
    "ResultTable",
    "load_config",
    # Exceptions
    "SpecmapError",
    "GraphError",
    "CorrespondenceError",
    "DimensionMismatchError",
    "NumericalError",
    "ConfigError",
)
