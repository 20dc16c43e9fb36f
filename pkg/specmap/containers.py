"""On-disk formats for bases, maps, rankings and perturbations.

Eigenbases and spectral maps share one little-endian binary container::

    magic "SPMP" | version u16 | record u8 | kind₁ 16s | kind₂ 16s | source 16s | 4 × u64 dims
    λ (float64, basis only) | matrix (float64, column-major)

Basis dims are ``(n, k, 0, 0)``; map dims are ``(n₁, k₁, n₂, k₂)`` and the
matrix is the k₂×k₁ C. CSV dumps are for inspection and spreadsheets.
"""
import csv
import json
import logging
import struct
from collections.abc import Iterable
from os import PathLike
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .exceptions import ContainerFormatError, NumericalError
from .fmap import MAP_SOURCES, SpectralMap
from .graph import Graph
from .matching import CandidateRanking
from .perturb import PerturbationRecord
from .spectral import BasisMeta, Eigenbasis

__all__ = (
    "MAGIC",
    "VERSION",
    "write_basis",
    "read_basis",
    "write_map",
    "read_map",
    "write_basis_csv",
    "write_map_csv",
    "read_map_csv",
    "write_ranking_csv",
    "write_perturbation",
    "read_perturbation",
)

logger = logging.getLogger(__name__)

MAGIC = b"SPMP"
VERSION = 1

RECORD_BASIS = 1
RECORD_MAP = 2

HEADER = struct.Struct("<4sHB16s16s16s4Q")
FLOAT = np.dtype("<f8")

MAP_CSV_HEADER = ("k2", "k1", "source", "n1", "n2", "kind1", "kind2")
RANKING_CSV_HEADER = ("query_node", "rank", "candidate", "distance")


def _text(value: str) -> bytes:
    encoded = value.encode()
    if len(encoded) > 16:
        raise ContainerFormatError(f"{value!r} does not fit a 16-byte header field")
    return encoded


def _untext(raw: bytes) -> str:
    return raw.rstrip(b"\0").decode()


def _write(f: BinaryIO, record: int, kinds: tuple[str, str], source: str, dims, evals, matrix):
    f.write(HEADER.pack(MAGIC, VERSION, record, _text(kinds[0]), _text(kinds[1]), _text(source), *dims))
    f.write(np.asarray(evals, dtype=FLOAT).tobytes())
    f.write(np.asarray(matrix, dtype=FLOAT).tobytes(order="F"))


def _read_header(f: BinaryIO, expected: int):
    raw = f.read(HEADER.size)
    if len(raw) != HEADER.size:
        raise ContainerFormatError("truncated header")
    magic, version, record, kind1, kind2, source, *dims = HEADER.unpack(raw)
    if magic != MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported container version {version}")
    if record != expected:
        raise ContainerFormatError(f"expected record type {expected}, found {record}")
    return _untext(kind1), _untext(kind2), _untext(source), dims


def _read_floats(f: BinaryIO, count: int) -> np.ndarray:
    raw = f.read(count * FLOAT.itemsize)
    if len(raw) != count * FLOAT.itemsize:
        raise ContainerFormatError(f"truncated payload: expected {count} float64 values")
    return np.frombuffer(raw, dtype=FLOAT).astype(np.float64)


def write_basis(path: str | PathLike, basis: Eigenbasis):
    """Write an eigenbasis to the binary container (node ids are not stored)."""
    with Path(path).open("wb") as f:
        _write(f, RECORD_BASIS, (basis.kind, ""), "", (basis.n, basis.k, 0, 0), basis.evals, basis.phi)
    logger.debug("Wrote basis n=%d k=%d to %s", basis.n, basis.k, path)


def read_basis(path: str | PathLike) -> Eigenbasis:
    """Read an eigenbasis written by `write_basis`.

    Raises:
        ContainerFormatError: wrong magic, version or record type, a short payload,
            or values that do not form a valid basis
    """
    with Path(path).open("rb") as f:
        kind, _, _, (n, k, _, _) = _read_header(f, RECORD_BASIS)
        evals = _read_floats(f, k)
        phi = _read_floats(f, n * k).reshape((n, k), order="F")
        if f.read(1):
            raise ContainerFormatError("trailing bytes after payload")
    try:
        return Eigenbasis(phi, evals, kind)
    except NumericalError as e:
        raise ContainerFormatError(f"{path}: {e}") from e


def write_map(path: str | PathLike, spectral_map: SpectralMap):
    """Write a spectral map to the binary container; notes are not stored."""
    b1, b2 = spectral_map.basis1, spectral_map.basis2
    with Path(path).open("wb") as f:
        _write(f, RECORD_MAP, (b1.kind, b2.kind), spectral_map.source, (b1.n, b1.k, b2.n, b2.k), (), spectral_map.C)


def read_map(path: str | PathLike) -> SpectralMap:
    with Path(path).open("rb") as f:
        kind1, kind2, source, (n1, k1, n2, k2) = _read_header(f, RECORD_MAP)
        if source not in MAP_SOURCES:
            raise ContainerFormatError(f"unknown map source {source!r}")
        C = _read_floats(f, k2 * k1).reshape((k2, k1), order="F")
        if f.read(1):
            raise ContainerFormatError("trailing bytes after payload")
    return SpectralMap(C, BasisMeta(n1, k1, kind1), BasisMeta(n2, k2, kind2), source)


def write_basis_csv(path: str | PathLike, basis: Eigenbasis):
    """Debug dump: an ``eigenvalue`` row, then one row per node."""
    node_ids = basis.node_ids if basis.node_ids is not None else range(basis.n)
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["node", *(f"phi_{j}" for j in range(basis.k))])
        writer.writerow(["eigenvalue", *(repr(float(v)) for v in basis.evals)])
        for node, row in zip(node_ids, basis.phi):
            writer.writerow([node, *(repr(float(v)) for v in row)])


def write_map_csv(path: str | PathLike, spectral_map: SpectralMap):
    """Row-major CSV: a provenance header line and its values, then the k₂ rows of C."""
    b1, b2 = spectral_map.basis1, spectral_map.basis2
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MAP_CSV_HEADER)
        writer.writerow([b2.k, b1.k, spectral_map.source, b1.n, b2.n, b1.kind, b2.kind])
        for row in spectral_map.C:
            writer.writerow([repr(float(v)) for v in row])


def read_map_csv(path: str | PathLike) -> SpectralMap:
    """Read a map written by `write_map_csv`.

    Raises:
        ContainerFormatError: missing header or a matrix of the wrong shape
    """
    with Path(path).open(newline="") as f:
        rows = list(csv.reader(f))

    if len(rows) < 2 or tuple(rows[0]) != MAP_CSV_HEADER:
        raise ContainerFormatError(f"expected header {','.join(MAP_CSV_HEADER)}")
    try:
        k2, k1, source, n1, n2, kind1, kind2 = rows[1]
        k1, k2, n1, n2 = int(k1), int(k2), int(n1), int(n2)
        C = np.array([[float(v) for v in row] for row in rows[2:]], dtype=np.float64).reshape(-1, k1)
    except ValueError as e:
        raise ContainerFormatError(f"malformed map CSV: {e}") from None

    if C.shape != (k2, k1):
        raise ContainerFormatError(f"header announces {k2}×{k1}, body holds {C.shape[0]}×{C.shape[1]}")
    return SpectralMap(C, BasisMeta(n1, k1, kind1), BasisMeta(n2, k2, kind2), source)


def write_ranking_csv(
        path: str | PathLike,
        ranking: CandidateRanking,
        g1: Graph | None = None,
        g2: Graph | None = None,
        *,
        top: int | None = None,
):
    """``query_node,rank,candidate,distance`` rows; ``top`` keeps the first candidates per query."""
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RANKING_CSV_HEADER)
        for query, rank, candidate, distance in ranking.to_rows(g1, g2):
            if top is None or rank <= top:
                writer.writerow([query, rank, candidate, repr(distance)])


def write_perturbation(path: str | PathLike, records: PerturbationRecord | Iterable[PerturbationRecord]):
    """JSON list of ``{removed, added, fraction}`` objects."""
    if isinstance(records, PerturbationRecord):
        records = [records]
    with Path(path).open("w") as f:
        json.dump([r.to_dict() for r in records], f, indent=2)


def read_perturbation(path: str | PathLike) -> list[PerturbationRecord]:
    try:
        with Path(path).open() as f:
            data = json.load(f)
        if isinstance(data, dict):
            data = [data]
        return [PerturbationRecord.from_dict(item) for item in data]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ContainerFormatError(f"malformed perturbation record in {path}: {e}") from None
