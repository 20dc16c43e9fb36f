"""Laplacian eigenbases and spectral node features.
"""
import logging
import math
from collections.abc import Iterable
from typing import Any, Literal

import attrs
import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import env
from .exceptions import (
    ConvergenceError,
    DimensionMismatchError,
    IsolatedNodeError,
    NotSymmetricError,
    NumericalError,
    UnknownNodeError,
)
from .graph import Graph, NodeId, SignalMatrix, laplacian

__all__ = (
    "LaplacianKind",
    "KSpec",
    "resolve_k",
    "BasisMeta",
    "Eigenbasis",
    "canonicalize_signs",
    "eigendecompose",
    "graph_eigenbasis",
    "rw_positional_encoding",
)

logger = logging.getLogger(__name__)

type LaplacianKind = Literal["normalized", "combinatorial"]

LANCZOS_SHIFT = -1e-3
DEFAULT_GAP_TOL = 1e-6
ORTHONORMAL_TOL = 1e-6
NORMALIZED_SPECTRUM = (0.0, 2.0)


@attrs.frozen
class KSpec:
    """Eigenvector budget: an absolute count or a percentage of n."""

    value: float
    percent: bool = False

    @classmethod
    def parse(cls, spec: "KSpec | str | int | float") -> "KSpec":
        """Parse ``20``, ``"20"``, ``"5%"`` or a float fraction such as ``0.05`` (= 5%)."""
        if isinstance(spec, KSpec):
            return spec
        if isinstance(spec, bool):
            raise ValueError(f"invalid eigenvector budget {spec!r}")
        if isinstance(spec, int):
            return cls(spec)
        if isinstance(spec, float):
            return cls(spec * 100.0, percent=True)

        text = str(spec).strip()
        try:
            if text.endswith("%"):
                return cls(float(text[:-1]), percent=True)
            return cls(int(text))
        except ValueError:
            raise ValueError(f"invalid eigenvector budget {spec!r}") from None

    def resolve(self, n: int) -> int:
        """Concrete k for a graph with ``n`` nodes, within ``[1, n]``.

        Percentages round half-up with a floor of 1.
        """
        if self.percent:
            k = math.floor(n * self.value / 100.0 + 0.5)
        else:
            k = int(self.value)
        return min(max(1, k), n)

    def __str__(self):
        return f"{self.value:g}%" if self.percent else str(int(self.value))


def resolve_k(spec: KSpec | str | int | float, n: int) -> int:
    return KSpec.parse(spec).resolve(n)


@attrs.frozen
class BasisMeta:
    """Provenance of an eigenbasis: size, truncation and operator."""

    n: int
    k: int
    kind: str

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "k": self.k, "kind": self.kind}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BasisMeta":
        return cls(int(data["n"]), int(data["k"]), str(data["kind"]))


def _readonly(values) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    array.flags.writeable = False
    return array


@attrs.frozen(slots=False, eq=False)
class Eigenbasis:
    """First k eigenpairs of a graph Laplacian.

    Columns of ``phi`` are orthonormal eigenvectors, sorted by non-descending
    ``evals`` and sign-canonicalized.
    Construction rejects non-finite entries, descending eigenvalues, columns
    more than 1e-6 away from orthonormal, and normalized-kind eigenvalues
    outside [0, 2] with `NumericalError`.
    """

    phi: np.ndarray = attrs.field(converter=_readonly)
    evals: np.ndarray = attrs.field(converter=_readonly)
    kind: str = "normalized"
    node_ids: tuple[NodeId, ...] | None = attrs.field(default=None, converter=attrs.converters.optional(tuple))

    def __attrs_post_init__(self):
        if self.phi.ndim != 2 or self.evals.ndim != 1 or self.phi.shape[1] != len(self.evals):
            raise DimensionMismatchError(
                f"phi {self.phi.shape} and evals {self.evals.shape} do not describe k eigenpairs"
            )
        if self.node_ids is not None and len(self.node_ids) != self.phi.shape[0]:
            raise DimensionMismatchError(f"{len(self.node_ids)} node ids for {self.phi.shape[0]} rows")
        if not (np.isfinite(self.phi).all() and np.isfinite(self.evals).all()):
            raise NumericalError("eigenbasis entries must be finite")

        slack = 1e-10 * np.maximum(1.0, np.abs(self.evals))
        if (np.diff(self.evals) < -slack[1:]).any():
            raise NumericalError("eigenvalues must be non-descending")
        if self.kind == "normalized":
            low, high = NORMALIZED_SPECTRUM
            if self.evals.size and (self.evals.min() < low - 1e-8 or self.evals.max() > high + 1e-8):
                raise NumericalError(f"normalized Laplacian eigenvalues must lie in [{low:g}, {high:g}]")

        drift = np.abs(self.phi.T @ self.phi - np.eye(self.k)).max(initial=0.0)
        if drift > ORTHONORMAL_TOL:
            raise NumericalError(f"eigenvector columns are not orthonormal (max deviation {drift:.3g})")

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def k(self) -> int:
        return self.phi.shape[1]

    @property
    def meta(self) -> BasisMeta:
        return BasisMeta(self.n, self.k, self.kind)

    def truncate(self, k: int) -> "Eigenbasis":
        """The first ``k`` eigenpairs."""
        if not 1 <= k <= self.k:
            raise ValueError(f"cannot truncate a {self.k}-vector basis to {k}")
        if k == self.k:
            return self
        return Eigenbasis(self.phi[:, :k], self.evals[:k], self.kind, self.node_ids)

    def position(self, node: NodeId) -> int:
        if self.node_ids is None:
            return int(node)
        try:
            return self.node_ids.index(node)
        except ValueError:
            raise UnknownNodeError(f"unknown node {node!r}") from None

    def multiplicity_blocks(self, gap_tol: float = DEFAULT_GAP_TOL) -> tuple[tuple[int, int], ...]:
        """``(start, stop)`` column ranges of eigenvalues closer than ``gap_tol``; only blocks of size > 1."""
        blocks = []
        start = 0
        for i in range(1, self.k + 1):
            if i == self.k or self.evals[i] - self.evals[i - 1] > gap_tol:
                if i - start > 1:
                    blocks.append((start, i))
                start = i
        return tuple(blocks)

    def has_simple_spectrum(self, gap_tol: float = DEFAULT_GAP_TOL) -> bool:
        return not self.multiplicity_blocks(gap_tol)


def canonicalize_signs(phi: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive.

    Magnitudes within a relative 1e-10 of the column maximum count as ties and
    resolve to the lowest row index.
    """
    phi = np.array(phi, dtype=np.float64)
    magnitudes = np.abs(phi)
    peaks = magnitudes.max(axis=0, initial=0.0)
    for j, peak in enumerate(peaks):
        if peak == 0.0:
            continue
        i = np.flatnonzero(magnitudes[:, j] >= peak * (1.0 - 1e-10))[0]
        if phi[i, j] < 0:
            phi[:, j] = -phi[:, j]
    return phi


def _as_sparse(L) -> sp.csr_array:
    L = sp.csr_array(L, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionMismatchError(f"operator must be square, got shape {L.shape}")
    return L


def _lanczos(L: sp.csr_array, k: int, maxiter: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Shift-invert Lanczos for the k smallest eigenpairs, polished by a Rayleigh–Ritz step."""
    try:
        evals, vecs = spla.eigsh(L.tocsc(), k=k, sigma=LANCZOS_SHIFT, which="LM", tol=0.0, maxiter=maxiter)
    except spla.ArpackNoConvergence as e:
        raise ConvergenceError(
            f"Lanczos converged {len(e.eigenvalues)} of {k} eigenpairs before the iteration cap"
        ) from None

    q, _ = np.linalg.qr(vecs[:, np.argsort(evals)])
    projected = q.T @ (L @ q)
    evals, rotation = la.eigh((projected + projected.T) / 2.0)
    return evals, q @ rotation


def eigendecompose(
        L,
        k: int | KSpec | str,
        *,
        kind: str = "normalized",
        node_ids: Iterable[NodeId] | None = None,
        solver: Literal["auto", "dense", "lanczos"] = "auto",
        dense_threshold: int | None = None,
        symmetry_tol: float = 1e-10,
        residual_tol: float = 1e-8,
        maxiter: int | None = None,
) -> Eigenbasis:
    """The k smallest eigenpairs of a symmetric operator.

    Args:
        L: square symmetric matrix (sparse or dense)
        k: eigenvector count, or a `KSpec`/percentage string resolved against n
        kind: Laplacian kind recorded in the basis
        node_ids: ids of the rows, stored with the basis
        solver: ``dense`` (full symmetric eigensolver), ``lanczos`` (shift-invert
            Lanczos), or ``auto``: dense up to ``dense_threshold`` nodes
        dense_threshold: defaults to SPECMAP_DENSE_THRESHOLD
        symmetry_tol: largest tolerated ``|L − Lᵀ|`` entry
        residual_tol: per-pair bound on ``‖Lφ − λφ‖₂ / max(1, |λ|)``
        maxiter: Lanczos iteration cap (ARPACK default when None)

    Raises:
        NotSymmetricError: ``L`` is not symmetric
        ConvergenceError: Lanczos hit its cap or a residual exceeds the bound
    """
    L = _as_sparse(L)
    n = L.shape[0]
    k = int(k) if isinstance(k, (int, np.integer)) else resolve_k(k, n)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")

    asymmetry = abs(L - L.T).max() if L.nnz else 0.0
    if asymmetry > symmetry_tol:
        raise NotSymmetricError(f"operator is not symmetric (max |L − Lᵀ| = {asymmetry:.3g})")

    threshold = env.SPECMAP_DENSE_THRESHOLD if dense_threshold is None else dense_threshold
    use_dense = solver == "dense" or (solver == "auto" and n <= threshold) or k >= n - 1

    if use_dense:
        logger.debug("Dense eigensolver: n=%d, k=%d", n, k)
        evals, vecs = la.eigh(L.toarray(), subset_by_index=[0, k - 1])
    else:
        logger.debug("Lanczos eigensolver: n=%d, k=%d, shift=%g", n, k, LANCZOS_SHIFT)
        evals, vecs = _lanczos(L, k, maxiter)

    if kind == "normalized":
        evals = np.clip(evals, 0.0, 2.0)

    vecs = canonicalize_signs(vecs)

    residuals = np.linalg.norm(L @ vecs - vecs * evals, axis=0)
    bounds = residual_tol * np.maximum(1.0, np.abs(evals))
    if (residuals > bounds).any():
        worst = int(np.argmax(residuals / bounds))
        raise ConvergenceError(
            f"eigenpair {worst} residual {residuals[worst]:.3g} exceeds {bounds[worst]:.3g}"
        )

    return Eigenbasis(vecs, evals, kind, node_ids)


def graph_eigenbasis(g: Graph, k: int | KSpec | str, kind: str = "normalized", **kwds) -> Eigenbasis:
    """Eigenbasis of ``g``'s Laplacian with its node ids attached."""
    return eigendecompose(laplacian(g, kind), resolve_k(k, g.n), kind=kind, node_ids=g.node_ids, **kwds)


def rw_positional_encoding(g: Graph, d: int = 16) -> SignalMatrix:
    """Random-walk positional encoding.

    Column ``p − 1`` holds ``diag((D⁻¹A)^p)``, the probability of returning to
    each node after exactly p random-walk steps.

    Raises:
        IsolatedNodeError: a node has degree 0
    """
    if d < 1:
        raise ValueError(f"d must be at least 1, got {d}")
    if (g.degrees == 0).any():
        raise IsolatedNodeError("random-walk encoding is undefined on isolated nodes")

    walk = sp.csr_array(sp.diags_array(1.0 / g.degrees.astype(np.float64)) @ g.adjacency_matrix())
    power = np.eye(g.n)
    encoding = np.empty((g.n, d))
    for p in range(d):
        power = walk @ power
        encoding[:, p] = np.diagonal(power)

    return SignalMatrix(np.clip(encoding, 0.0, 1.0), g.node_ids)
