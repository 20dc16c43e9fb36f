"""Spectral maps: construction from correspondences, signal transfer and comparison.

A spectral map between G₁ and G₂ is the k₂×k₁ matrix ``C = Φ₂ᵀ S Φ₁``
expressing a node correspondence S in truncated Laplacian eigenbases. A
function f on G₁ travels to G₂ as ``Φ₂ C Φ₁ᵀ f``.
"""
import logging
from collections.abc import Iterable, Mapping
from typing import Any, Literal

import attrs
import numpy as np
from scipy.linalg import orthogonal_procrustes

from .exceptions import DimensionMismatchError
from .graph import NodeCorrespondence, NodeId, SignalMatrix
from .spectral import BasisMeta, Eigenbasis

__all__ = (
    "MAP_SOURCES",
    "SpectralMap",
    "SignalMatrix",
    "compute_spectral_map",
    "reverse_map",
    "transfer_signal",
    "pullback_signal",
    "normalize_signal",
    "rmse",
    "map_distance",
    "gaussian_noise_map",
    "distillation_loss",
    "diagonal_energy",
)

logger = logging.getLogger(__name__)

MAP_SOURCES = ("ground_truth", "estimated", "refined")


def _readonly(values) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    if array.ndim != 2:
        raise DimensionMismatchError(f"spectral map must be 2-D, got {array.ndim}-D")
    array.flags.writeable = False
    return array


@attrs.frozen(slots=False, eq=False)
class SpectralMap:
    """k₂×k₁ coefficient matrix with the provenance of the bases it was built in."""

    C: np.ndarray = attrs.field(converter=_readonly)
    basis1: BasisMeta
    basis2: BasisMeta
    source: str = attrs.field(default="ground_truth", validator=attrs.validators.in_(MAP_SOURCES))
    notes: Mapping[str, Any] = attrs.field(factory=dict)

    def __attrs_post_init__(self):
        expected = (self.basis2.k, self.basis1.k)
        if self.C.shape != expected:
            raise DimensionMismatchError(f"C has shape {self.C.shape}, bases call for {expected}")

    @property
    def k1(self) -> int:
        return self.basis1.k

    @property
    def k2(self) -> int:
        return self.basis2.k

    def evolve(self, C: np.ndarray, **changes) -> "SpectralMap":
        """Same provenance, new coefficients."""
        return attrs.evolve(self, C=C, **changes)


def _check_bases(spectral_map: SpectralMap, b1: Eigenbasis, b2: Eigenbasis):
    if b1.meta != spectral_map.basis1 or b2.meta != spectral_map.basis2:
        raise DimensionMismatchError(
            f"bases {b1.meta}, {b2.meta} do not match the map's provenance "
            f"{spectral_map.basis1}, {spectral_map.basis2}"
        )


def _values(f: SignalMatrix | np.ndarray) -> np.ndarray:
    if isinstance(f, SignalMatrix):
        return f.values
    return SignalMatrix(f).values


def _coefficients(C: SpectralMap | np.ndarray) -> np.ndarray:
    return C.C if isinstance(C, SpectralMap) else np.asarray(C, dtype=np.float64)


def _check_rows(f: np.ndarray, n: int, what: str):
    if f.shape[0] != n:
        raise DimensionMismatchError(f"{what} has {f.shape[0]} rows, expected {n}")


def compute_spectral_map(S: NodeCorrespondence, b1: Eigenbasis, b2: Eigenbasis) -> SpectralMap:
    """Ground-truth map ``C = Φ₂ᵀ S Φ₁`` for a known correspondence G₂ → G₁.

    Raises:
        DimensionMismatchError: S does not connect bases of these sizes
    """
    if S.n1 != b1.n or S.n2 != b2.n:
        raise DimensionMismatchError(
            f"correspondence maps {S.n2} nodes into {S.n1}, bases have n₁={b1.n}, n₂={b2.n}"
        )
    C = b2.phi.T @ b1.phi[S.targets]
    return SpectralMap(C, b1.meta, b2.meta, "ground_truth")


def reverse_map(spectral_map: SpectralMap) -> SpectralMap:
    """The map for the opposite direction (G₂ → G₁), ``Cᵀ``.

    For a ground-truth map this is exactly ``Φ₁ᵀ Sᵀ Φ₂``.
    """
    return SpectralMap(spectral_map.C.T, spectral_map.basis2, spectral_map.basis1, spectral_map.source,
                       dict(spectral_map.notes))


def transfer_signal(
        spectral_map: SpectralMap,
        b1: Eigenbasis,
        b2: Eigenbasis,
        f: SignalMatrix | np.ndarray,
) -> SignalMatrix:
    """Carry functions on G₁ to G₂: ``ĝ = Φ₂ C Φ₁ᵀ f``, column by column.

    Raises:
        DimensionMismatchError: bases differ from the map's provenance or f has the wrong row count
    """
    _check_bases(spectral_map, b1, b2)
    values = _values(f)
    _check_rows(values, b1.n, "signal")
    return SignalMatrix(b2.phi @ (spectral_map.C @ (b1.phi.T @ values)), b2.node_ids)


def pullback_signal(
        S: NodeCorrespondence,
        f: SignalMatrix | np.ndarray,
        node_ids: Iterable[NodeId] | None = None,
) -> SignalMatrix:
    """Node-to-node transfer ``S·f``: each G₂ node takes the value of its G₁ match."""
    values = _values(f)
    _check_rows(values, S.n1, "signal")
    return SignalMatrix(values[S.targets], node_ids)


def normalize_signal(f: SignalMatrix | np.ndarray) -> SignalMatrix:
    """Standardize each column to mean 0 and population standard deviation 1.

    Constant columns become all zeros.
    """
    values = _values(f)
    if values.shape[0] < 2:
        raise DimensionMismatchError("normalizing needs at least two nodes")

    mean = values.mean(axis=0)
    std = values.std(axis=0)
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(constant, 1.0, std)
    normalized = np.where(constant, 0.0, (values - mean) / scale)

    node_ids = f.node_ids if isinstance(f, SignalMatrix) else None
    return SignalMatrix(normalized, node_ids)


def rmse(g: SignalMatrix | np.ndarray, g_hat: SignalMatrix | np.ndarray) -> float:
    """Root mean squared error over all entries."""
    a, b = _values(g), _values(g_hat)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shapes {a.shape} and {b.shape} differ")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def map_distance(
        C: SpectralMap | np.ndarray,
        C2: SpectralMap | np.ndarray,
        *,
        blocks: Iterable[tuple[int, int]] | None = None,
) -> float:
    """Sign-invariant squared Frobenius distance ``min_s ‖C − diag(s) C′‖²_F``.

    Every row of ``C′`` (one eigenfunction of G₂) may flip sign; the minimizing
    flip is chosen per row from the sign of its dot product with the matching
    row of ``C``. Rows inside a ``blocks`` range (``(start, stop)`` of a
    repeated eigenvalue) are instead aligned by an orthogonal Procrustes
    rotation.
    """
    a, b = _coefficients(C), _coefficients(C2)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"maps of shape {a.shape} and {b.shape} cannot be compared")

    signs = np.where(np.einsum("ij,ij->i", a, b) < 0, -1.0, 1.0)
    aligned = b * signs[:, None]

    for start, stop in blocks or ():
        if stop - start < 2:
            continue
        rotation, _ = orthogonal_procrustes(b[start:stop].T, a[start:stop].T)
        aligned[start:stop] = (b[start:stop].T @ rotation).T

    return float(np.sum((a - aligned) ** 2))


def gaussian_noise_map(C: SpectralMap, sigma: float, rng_seed: int) -> SpectralMap:
    """``C`` plus i.i.d. N(0, σ²) entries; deterministic per seed."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return C
    noise = np.random.default_rng(rng_seed).normal(0.0, sigma, size=C.C.shape)
    return C.evolve(C.C + noise, notes={**C.notes, "noise_sigma": sigma, "noise_seed": rng_seed})


def distillation_loss(
        spectral_map: SpectralMap,
        b1: Eigenbasis,
        b2: Eigenbasis,
        x_t: SignalMatrix | np.ndarray,
        x_s: SignalMatrix | np.ndarray,
        *,
        reduction: Literal["fro", "mse"] = "fro",
) -> float:
    """Feature alignment loss ``‖C Φ₁ᵀ x_t − Φ₂ᵀ x_s‖``.

    ``fro`` is the Frobenius norm; ``mse`` the mean of the squared residual entries.
    """
    _check_bases(spectral_map, b1, b2)
    full, sub = _values(x_t), _values(x_s)
    _check_rows(full, b1.n, "x_t")
    _check_rows(sub, b2.n, "x_s")
    if full.shape[1] != sub.shape[1]:
        raise DimensionMismatchError(f"x_t has {full.shape[1]} columns, x_s has {sub.shape[1]}")

    residual = spectral_map.C @ (b1.phi.T @ full) - b2.phi.T @ sub
    match reduction:
        case "fro":
            return float(np.linalg.norm(residual))
        case "mse":
            return float(np.mean(residual ** 2))
    raise ValueError(f"unknown reduction {reduction!r}")


def diagonal_energy(C: SpectralMap | np.ndarray, band: int = 0) -> float:
    """Share of ``‖C‖²_F`` lying within ``band`` of the main diagonal."""
    a = _coefficients(C)
    total = float(np.sum(a ** 2))
    if total == 0.0:
        return 0.0
    rows, cols = np.indices(a.shape)
    return float(np.sum(a[np.abs(rows - cols) <= band] ** 2)) / total
