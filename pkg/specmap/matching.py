"""Spectral maps without a known correspondence.

Descriptors (functions known on both graphs) pin down an estimated
map; node-to-node correspondences are read back from a map by nearest
neighbors in the spectral embedding and scored by mean average precision.
"""
import logging
from collections.abc import Iterable, Iterator
from concurrent.futures import ThreadPoolExecutor
from os import PathLike
from pathlib import Path
from typing import Any, Literal

import attrs
import numpy as np
import scipy.linalg as la
from scipy.spatial.distance import cdist

from .exceptions import (
    CorrespondenceError,
    DimensionMismatchError,
    EdgeListParseError,
    NumericalError,
    RankDeficientError,
)
from .fmap import SpectralMap, _check_bases, normalize_signal
from .graph import Graph, NodeCorrespondence, NodeId, SignalMatrix, node_sort_key, parse_node
from .spectral import Eigenbasis

__all__ = (
    "DESCRIPTOR_KINDS",
    "DescriptorSet",
    "RegularizerConfig",
    "CandidateRanking",
    "band_limited_indicator",
    "landmark_descriptors",
    "feature_descriptors",
    "sample_landmarks",
    "load_landmarks",
    "default_mask_width",
    "slanted_mask",
    "map_objective",
    "estimate_map",
    "recover_node_map",
    "zoomout_refine",
    "mean_average_precision",
)

logger = logging.getLogger(__name__)

DESCRIPTOR_KINDS = ("landmark_indicator", "raw_feature")
DEFAULT_LANDMARKS = 50

ORTH_MAX_ITER = 500
ORTH_REL_TOL = 1e-8
ARMIJO = 1e-4
MASK_FLOOR = 0.3


def _descriptor_matrix(values) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2 or array.shape[1] < 1:
        raise DimensionMismatchError("descriptor set needs an n×m matrix with m ≥ 1")
    if not np.isfinite(array).all():
        raise NumericalError("descriptor entries must be finite")
    array.flags.writeable = False
    return array


@attrs.frozen(slots=False, eq=False)
class DescriptorSet:
    """m descriptor functions on one graph; column j pairs with column j of its partner set."""

    F: np.ndarray = attrs.field(converter=_descriptor_matrix)
    kind: str = attrs.field(default="landmark_indicator", validator=attrs.validators.in_(DESCRIPTOR_KINDS))

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.F.shape[1]


def _non_negative(instance, attribute, value):
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"{attribute.name} must be finite and non-negative, got {value}")


def _positive_or_auto(instance, attribute, value):
    if value is not None and (not np.isfinite(value) or value <= 0):
        raise ValueError(f"{attribute.name} must be finite and positive, got {value}")


@attrs.frozen
class RegularizerConfig:
    """Weights of the mask and orthogonality penalties.

    Both weights are relative to the data term, which is the mean squared
    residual over the k₂×m descriptor coefficients, so the same weight fits
    any descriptor count and band size. ``mask_floor`` is added to every
    squared mask entry, so aligned eigenvalues keep a small penalty and each
    row system stays positive definite.

    ``mask_width=None`` picks `default_mask_width` of the source basis.
    """

    mu_mask: float = attrs.field(default=0.0, converter=float, validator=_non_negative)
    mu_orth: float = attrs.field(default=0.0, converter=float, validator=_non_negative)
    mask_width: float | None = attrs.field(
        default=None,
        converter=attrs.converters.optional(float),
        validator=_positive_or_auto,
    )
    mask_floor: float = attrs.field(default=MASK_FLOOR, converter=float, validator=_non_negative)

    def to_dict(self) -> dict[str, Any]:
        return attrs.asdict(self)


@attrs.frozen(slots=False, eq=False)
class CandidateRanking:
    """Candidate G₁ positions for every G₂ node, nearest first.

    ``order[j]`` lists G₁ positions sorted by ascending embedding distance to
    G₂ node ``j``. Equal distances go by ascending G₁ node id: ``tie_key[x]``
    is the rank of position ``x`` in id order, and ``None`` means ids follow
    positions.
    """

    order: np.ndarray = attrs.field(converter=np.asarray)
    distances: np.ndarray = attrs.field(converter=np.asarray)
    tie_key: np.ndarray | None = attrs.field(
        default=None,
        kw_only=True,
        converter=attrs.converters.optional(np.asarray),
    )

    def __attrs_post_init__(self):
        if self.order.ndim != 2 or self.order.shape != self.distances.shape:
            raise DimensionMismatchError(
                f"order {self.order.shape} and distances {self.distances.shape} must be matching 2-D arrays"
            )

    @property
    def n2(self) -> int:
        return self.order.shape[0]

    def top1(self) -> np.ndarray:
        """Point estimate: the nearest G₁ position for every G₂ node."""
        return self.order[:, 0].copy()

    def canonical_order(self) -> np.ndarray:
        """``order`` re-sorted by distance, then by G₁ node id."""
        ids = self.order if self.tie_key is None else self.tie_key[self.order]
        resort = np.lexsort((ids, self.distances), axis=1)
        return np.take_along_axis(self.order, resort, axis=1)

    def to_rows(self, g1: Graph | None = None, g2: Graph | None = None) -> Iterator[tuple[NodeId, int, NodeId, float]]:
        """``(query_node, rank, candidate, distance)`` rows with 1-based ranks.

        Positions are translated to node ids when the graphs are given.
        """
        for j in range(self.n2):
            query = g2.node_ids[j] if g2 is not None else j
            for rank, (x, d) in enumerate(zip(self.order[j], self.distances[j]), start=1):
                candidate = g1.node_ids[x] if g1 is not None else int(x)
                yield query, rank, candidate, float(d)


def band_limited_indicator(landmark: NodeId, b: Eigenbasis) -> np.ndarray:
    """``Φ Φᵀ δ`` for the delta at ``landmark``, scaled to unit 2-norm.

    Raises:
        UnknownNodeError: the landmark is not a node of the basis' graph
        NumericalError: the projection vanishes
    """
    i = b.position(landmark)
    column = b.phi @ b.phi[i]
    norm = np.linalg.norm(column)
    if norm == 0.0:
        raise NumericalError(f"landmark {landmark!r} has no component in the first {b.k} eigenvectors")
    return column / norm


def landmark_descriptors(
        pairs: Iterable[tuple[NodeId, NodeId]],
        b1: Eigenbasis,
        b2: Eigenbasis,
) -> tuple[DescriptorSet, DescriptorSet]:
    """Band-limited indicators for ``(g1_node, g2_node)`` landmark matches."""
    pairs = list(pairs)
    if not pairs:
        raise DimensionMismatchError("at least one landmark pair is needed")
    F1 = np.column_stack([band_limited_indicator(u, b1) for u, _ in pairs])
    F2 = np.column_stack([band_limited_indicator(v, b2) for _, v in pairs])
    return DescriptorSet(F1, "landmark_indicator"), DescriptorSet(F2, "landmark_indicator")


def feature_descriptors(
        f1: SignalMatrix | np.ndarray,
        f2: SignalMatrix | np.ndarray,
) -> tuple[DescriptorSet, DescriptorSet]:
    """Node features of both graphs as descriptors, each column standardized first."""
    x1, x2 = normalize_signal(f1).values, normalize_signal(f2).values
    if x1.shape[1] != x2.shape[1]:
        raise DimensionMismatchError(f"feature counts differ: {x1.shape[1]} and {x2.shape[1]}")
    return DescriptorSet(x1, "raw_feature"), DescriptorSet(x2, "raw_feature")


def sample_landmarks(
        S: NodeCorrespondence,
        g1: Graph,
        g2: Graph,
        m: int = DEFAULT_LANDMARKS,
        rng_seed: int = 0,
) -> list[tuple[NodeId, NodeId]]:
    """Draw ``m`` ground-truth matches (clipped to |V₂|) as ``(g1_node, g2_node)`` pairs."""
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    m = min(m, S.n2)
    picked = np.sort(np.random.default_rng(rng_seed).choice(S.n2, size=m, replace=False))
    return [(g1.node_ids[S.target[j]], g2.node_ids[j]) for j in picked]


def load_landmarks(path: str | PathLike) -> list[tuple[NodeId, NodeId]]:
    """Read ``g1_node g2_node`` lines; ``#`` lines are comments."""
    pairs = []
    with Path(path).open() as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise EdgeListParseError(f"expected 'g1_node g2_node', got {line!r}", line_number=line_number)
            pairs.append((parse_node(parts[0]), parse_node(parts[1])))
    return pairs


def default_mask_width(b: Eigenbasis) -> float:
    """Mean gap between consecutive eigenvalues, or 1.0 when there is none."""
    if b.k < 2:
        return 1.0
    gap = float(np.mean(np.diff(b.evals)))
    return gap if gap > 0 else 1.0


def slanted_mask(b1: Eigenbasis, b2: Eigenbasis, width: float) -> np.ndarray:
    """k₂×k₁ mask ``W(i, j) = 1 − exp(−(λ²ᵢ − λ¹ⱼ)² / width²)``.

    Near 0 where the eigenvalues agree, near 1 where they diverge.
    """
    if not width > 0:
        raise ValueError(f"width must be positive, got {width}")
    gaps = b2.evals[:, None] - b1.evals[None, :]
    return -np.expm1(-(gaps / width) ** 2)


def _off_diagonal(G: np.ndarray) -> np.ndarray:
    return G - np.diag(np.diag(G))


def _mask_weights(b1: Eigenbasis, b2: Eigenbasis, reg: RegularizerConfig) -> tuple[np.ndarray, float]:
    width = reg.mask_width or default_mask_width(b1)
    return slanted_mask(b1, b2, width) ** 2 + reg.mask_floor, width


def _objective(C, A, B, W2, reg: RegularizerConfig) -> float:
    value = float(np.mean((C @ A - B) ** 2))
    if reg.mu_mask:
        value += reg.mu_mask * float(np.sum(W2 * C ** 2))
    if reg.mu_orth:
        value += reg.mu_orth * float(np.sum(_off_diagonal(C.T @ C) ** 2))
    return value


def _gradient(C, A, B, W2, reg: RegularizerConfig) -> np.ndarray:
    grad = 2.0 / B.size * (C @ A - B) @ A.T
    if reg.mu_mask:
        grad += 2.0 * reg.mu_mask * W2 * C
    if reg.mu_orth:
        grad += 4.0 * reg.mu_orth * C @ _off_diagonal(C.T @ C)
    return grad


def _spectral_descriptors(F1: DescriptorSet, F2: DescriptorSet, b1: Eigenbasis, b2: Eigenbasis):
    if F1.n != b1.n or F2.n != b2.n:
        raise DimensionMismatchError(
            f"descriptors on {F1.n} and {F2.n} nodes do not fit bases on {b1.n} and {b2.n} nodes"
        )
    if F1.m != F2.m:
        raise DimensionMismatchError(f"descriptor counts differ: {F1.m} and {F2.m}")
    return b1.phi.T @ F1.F, b2.phi.T @ F2.F


def map_objective(
        C: SpectralMap | np.ndarray,
        F1: DescriptorSet,
        F2: DescriptorSet,
        b1: Eigenbasis,
        b2: Eigenbasis,
        reg: RegularizerConfig = RegularizerConfig(),
) -> float:
    """The quantity `estimate_map` minimizes, evaluated at ``C``."""
    A, B = _spectral_descriptors(F1, F2, b1, b2)
    W2, _ = _mask_weights(b1, b2, reg)
    coefficients = C.C if isinstance(C, SpectralMap) else np.asarray(C, dtype=np.float64)
    return _objective(coefficients, A, B, W2, reg)


def _ridge_rows(
        A: np.ndarray,
        B: np.ndarray,
        W2: np.ndarray,
        mu: float,
        rank_deficient: str,
) -> tuple[np.ndarray, bool]:
    """Row-wise ``(AAᵀ + μ k₂m diag(W²ᵢ)) cᵢ = A bᵢ``; returns C and whether a min-norm fallback was used.

    The ``k₂m`` factor turns the summed normal equations into those of the
    mean-squared data term.
    """
    k1 = A.shape[0]
    gram = A @ A.T
    rhs = A @ B.T
    fallback = False

    def solve(system: np.ndarray, right: np.ndarray) -> np.ndarray:
        nonlocal fallback
        if np.linalg.matrix_rank(system) < k1:
            if rank_deficient != "lstsq":
                raise RankDeficientError(
                    f"descriptor system has rank {np.linalg.matrix_rank(system)} < k₁={k1}; "
                    f"add descriptors, increase mu_mask, or pass rank_deficient='lstsq'"
                )
            fallback = True
            return la.lstsq(system, right)[0]
        return la.solve(system, right, assume_a="sym")

    if mu == 0.0:
        return solve(gram, rhs).T, fallback

    C = np.empty((B.shape[0], k1))
    for i in range(B.shape[0]):
        C[i] = solve(gram + mu * B.size * np.diag(W2[i]), rhs[:, i])
    return C, fallback


def estimate_map(
        F1: DescriptorSet,
        F2: DescriptorSet,
        b1: Eigenbasis,
        b2: Eigenbasis,
        reg: RegularizerConfig = RegularizerConfig(),
        *,
        rank_deficient: Literal["raise", "lstsq"] = "raise",
) -> SpectralMap:
    """Map minimizing the mean-squared data term plus the mask and orthogonality penalties.

    The objective is ``‖C Φ₁ᵀF₁ − Φ₂ᵀF₂‖² / (k₂m) + μ_mask Σ (W² + floor) ⊙ C²
    + μ_orth Σ_{ℓ≠h} (CᵀC)²_{ℓh}``.

    The data and mask terms separate over the rows of C and are solved in
    closed form. A positive ``mu_orth`` then starts plain gradient descent
    with Armijo backtracking from that solution (no projection step),
    stopping when the relative objective change drops below 1e-8 or after
    500 iterations.

    Args:
        F1: descriptors on G₁
        F2: descriptors on G₂, column-aligned with F1
        b1: G₁ basis
        b2: G₂ basis
        reg: penalty weights; the mask width used is stored in the map notes
        rank_deficient: ``raise`` signals a singular row system, ``lstsq``
            accepts its minimum-norm solution

    Raises:
        DimensionMismatchError: descriptors do not fit the bases or each other
        RankDeficientError: a row system is singular and ``rank_deficient="raise"``
    """
    A, B = _spectral_descriptors(F1, F2, b1, b2)
    W2, width = _mask_weights(b1, b2, reg)

    C, fallback = _ridge_rows(A, B, W2, reg.mu_mask, rank_deficient)
    notes: dict[str, Any] = {
        "descriptor_kind": F1.kind,
        "descriptors": F1.m,
        "mu_mask": reg.mu_mask,
        "mu_orth": reg.mu_orth,
        "mask_width": width,
        "mask_floor": reg.mask_floor,
        "min_norm_fallback": fallback,
    }

    if reg.mu_orth > 0:
        C, iterations = _descend(C, A, B, W2, reg)
        notes["orth_iterations"] = iterations

    logger.debug("Estimated %d×%d map from %d descriptors", C.shape[0], C.shape[1], F1.m)
    return SpectralMap(C, b1.meta, b2.meta, "estimated", notes)


def _descend(C, A, B, W2, reg: RegularizerConfig) -> tuple[np.ndarray, int]:
    """Unconstrained gradient descent with Armijo backtracking; the step doubles after each accepted move."""
    value = _objective(C, A, B, W2, reg)
    step = 1.0
    iteration = 0

    for iteration in range(1, ORTH_MAX_ITER + 1):
        grad = _gradient(C, A, B, W2, reg)
        slope = float(np.sum(grad ** 2))
        if slope == 0.0:
            break

        t = step
        while True:
            candidate = C - t * grad
            candidate_value = _objective(candidate, A, B, W2, reg)
            if candidate_value <= value - ARMIJO * t * slope or t < 1e-20:
                break
            t *= 0.5
        if candidate_value > value:
            break

        change = abs(value - candidate_value) / max(abs(value), np.finfo(float).tiny)
        C, value = candidate, candidate_value
        step = 2.0 * t
        if change < ORTH_REL_TOL:
            break

    logger.debug("Orthogonality descent: %d iterations, objective %.6g", iteration, value)
    return C, iteration


def _id_rank(b: Eigenbasis) -> np.ndarray:
    """Rank of every position when the basis' nodes are sorted by id."""
    if b.node_ids is None:
        return np.arange(b.n)
    ordered = sorted(range(b.n), key=lambda x: node_sort_key(b.node_ids[x]))
    rank = np.empty(b.n, dtype=np.intp)
    rank[ordered] = np.arange(b.n)
    return rank


def _rank(emb1: np.ndarray, emb2: np.ndarray, id_rank: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    distances = cdist(emb2, emb1)
    order = np.lexsort((np.broadcast_to(id_rank, distances.shape), distances), axis=1)
    return order, np.take_along_axis(distances, order, axis=1)


def recover_node_map(
        spectral_map: SpectralMap,
        b1: Eigenbasis,
        b2: Eigenbasis,
        *,
        workers: int | None = None,
        chunk_size: int = 1024,
) -> CandidateRanking:
    """Rank every G₁ node for every G₂ node by ``‖C Φ₁(x,:)ᵀ − Φ₂(y,:)ᵀ‖₂``.

    Equal distances go by ascending G₁ node id. Query nodes are processed in
    chunks of ``chunk_size``; with ``workers > 1`` the chunks run on a thread pool.
    """
    _check_bases(spectral_map, b1, b2)
    emb1 = b1.phi @ spectral_map.C.T
    emb2 = b2.phi
    id_rank = _id_rank(b1)

    starts = range(0, b2.n, chunk_size)
    if workers and workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(lambda s: _rank(emb1, emb2[s:s + chunk_size], id_rank), starts))
    else:
        parts = [_rank(emb1, emb2[s:s + chunk_size], id_rank) for s in starts]

    order = np.vstack([p[0] for p in parts])
    distances = np.vstack([p[1] for p in parts])
    return CandidateRanking(order, distances, tie_key=id_rank)


def _nearest(emb1: np.ndarray, emb2: np.ndarray, id_rank: np.ndarray, chunk_size: int = 1024) -> np.ndarray:
    nearest = []
    for s in range(0, emb2.shape[0], chunk_size):
        distances = cdist(emb2[s:s + chunk_size], emb1)
        tied = distances == distances.min(axis=1, keepdims=True)
        nearest.append(np.argmin(np.where(tied, id_rank, emb1.shape[0]), axis=1))
    return np.concatenate(nearest)


def zoomout_refine(
        spectral_map: SpectralMap,
        b1: Eigenbasis,
        b2: Eigenbasis,
        step: int = 2,
        k_max: int | None = None,
) -> SpectralMap:
    """Spectral upsampling of a square map from its size up to ``k_max``.

    Each round reads the top-1 node map off the current C, then rebuilds C
    ``step`` eigenvectors larger from that node map. The last round lands
    exactly on ``k_max`` (default: the smaller basis size).

    Raises:
        ValueError: non-square map, ``step < 1``, or ``k_max`` not above the map size
            or beyond the bases
        DimensionMismatchError: bases are not the ones the map was built from
    """
    k = spectral_map.k1
    if spectral_map.k2 != k:
        raise ValueError(f"refinement needs a square map, got {spectral_map.C.shape}")
    if step < 1:
        raise ValueError(f"step must be at least 1, got {step}")

    k_max = min(b1.k, b2.k) if k_max is None else k_max
    if not k < k_max <= min(b1.k, b2.k):
        raise ValueError(f"k_max must lie in ({k}, {min(b1.k, b2.k)}], got {k_max}")
    if b1.truncate(k).meta != spectral_map.basis1 or b2.truncate(k).meta != spectral_map.basis2:
        raise DimensionMismatchError("bases do not extend the ones the map was built from")

    id_rank = _id_rank(b1)
    C = spectral_map.C
    rounds = 0
    while k < k_max:
        matches = _nearest(b1.phi[:, :k] @ C.T, b2.phi[:, :k], id_rank)
        k = min(k + step, k_max)
        C = b2.phi[:, :k].T @ b1.phi[matches, :k]
        rounds += 1

    logger.debug("ZoomOut: %d rounds up to k=%d", rounds, k_max)
    notes = {**spectral_map.notes, "zoomout_step": step, "zoomout_from": spectral_map.k1}
    return SpectralMap(C, b1.truncate(k_max).meta, b2.truncate(k_max).meta, "refined", notes)


def mean_average_precision(candidates: CandidateRanking, truth: NodeCorrespondence) -> float:
    """Mean reciprocal rank of every G₂ node's true match.

    Candidates at equal distance are ranked by ascending G₁ node id first.

    Raises:
        DimensionMismatchError: ranking and correspondence cover different G₂ sizes
        CorrespondenceError: a true match is missing from its candidate list
    """
    if candidates.n2 != truth.n2:
        raise DimensionMismatchError(f"ranking covers {candidates.n2} nodes, correspondence {truth.n2}")

    hits = candidates.canonical_order() == truth.targets[:, None]
    found = hits.any(axis=1)
    if not found.all():
        missing = int(np.flatnonzero(~found)[0])
        raise CorrespondenceError(f"true match of G₂ position {missing} is not among its candidates")

    ranks = np.argmax(hits, axis=1) + 1
    return float(np.mean(1.0 / ranks))
