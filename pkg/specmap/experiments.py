"""Seeded experiment pipelines producing tabular results.

Three analyses are provided: how much the spectral map moves under edge
rewiring compared with Gaussian noise, how well positional encodings
transfer as the basis grows, and how well node correspondences are
recovered from ground-truth and estimated maps.
"""
import csv
import hashlib
import json
import logging
import statistics
import time
import tomllib
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from os import PathLike
from pathlib import Path
from typing import Any

import attrs

from . import env
from .containers import write_map, write_perturbation
from .datasets import load_dataset
from .exceptions import ConfigError, SpecmapError
from .fmap import (
    compute_spectral_map,
    diagonal_energy,
    gaussian_noise_map,
    map_distance,
    normalize_signal,
    pullback_signal,
    rmse,
    transfer_signal,
)
from .graph import Graph, NodeCorrespondence, load_edge_list
from .matching import (
    MASK_FLOOR,
    RegularizerConfig,
    estimate_map,
    feature_descriptors,
    landmark_descriptors,
    mean_average_precision,
    recover_node_map,
    sample_landmarks,
    zoomout_refine,
)
from .perturb import (
    class_subgraph,
    edit_fraction,
    holes_for_fraction,
    hop_limit_for_diameter,
    khop_for_fraction,
    load_node_labels,
    rewire,
)
from .spectral import KSpec, graph_eigenbasis, resolve_k, rw_positional_encoding

__all__ = (
    "PARTIALITY_KINDS",
    "ExperimentConfig",
    "ResultRow",
    "ResultTable",
    "load_config",
    "run_rewiring_robustness",
    "run_transfer_sweep",
    "run_matching_eval",
    "EXPERIMENTS",
)

logger = logging.getLogger(__name__)

PARTIALITY_KINDS = ("khop", "holes", "class_removal")
LAPLACIAN_KINDS = ("normalized", "combinatorial")

RESULT_COLUMNS = ("experiment", "parameter", "metric", "value", "seed", "config_hash")
SUMMARY_COLUMNS = ("experiment", "parameter", "metric", "median", "count")


def _floats(values: Iterable) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


def _k_specs(values: Iterable) -> tuple[str, ...]:
    return tuple(str(KSpec.parse(v)) for v in values)


def _default_fractions() -> tuple[float, ...]:
    return tuple(round(0.03 * i, 2) for i in range(1, 11))


@attrs.frozen(kw_only=True)
class ExperimentConfig:
    """Everything an experiment run depends on; two equal configs give identical results.

    The input graph is ``graph_path`` (an edge list) when set, otherwise the
    bundled ``dataset`` built with ``dataset_params``.
    """

    graph_path: str | None = None
    dataset: str = "karate"
    dataset_params: dict[str, Any] = attrs.field(factory=dict)
    laplacian_kind: str = "normalized"
    k_spec: tuple[str, ...] = attrs.field(default=("5%", "10%", "30%", "50%", "75%"), converter=_k_specs)
    partiality: tuple[str, ...] = attrs.field(default=("khop", "holes"), converter=tuple)
    partiality_levels: tuple[float, ...] = attrs.field(default=(0.9, 0.8, 0.7, 0.6, 0.5), converter=_floats)
    subgraph_fraction: float = attrs.field(default=0.6, converter=float)
    rewire_fractions: tuple[float, ...] = attrs.field(factory=_default_fractions, converter=_floats)
    hop_limited: bool = False
    noise_sigma: float = attrs.field(default=0.2, converter=float)
    map_size: int = 50
    energy_band: int = 0
    rwpe_dim: int = 16
    feature_estimate: bool = False
    rng_seed: int = 0
    seeds: int = 5
    landmarks: int = 50
    zoomout_step: int = 2
    mu_mask: float = attrs.field(default=1e-3, converter=float)
    mu_orth: float = attrs.field(default=0.0, converter=float)
    mask_width: float | None = None
    mask_floor: float = attrs.field(default=MASK_FLOOR, converter=float)
    labels_path: str | None = None
    largest_component: bool = False
    output_dir: str | None = None
    workers: int | None = None

    def __attrs_post_init__(self):
        def require(condition: bool, message: str):
            if not condition:
                raise ConfigError(message)

        require(self.laplacian_kind in LAPLACIAN_KINDS, f"laplacian_kind must be one of {LAPLACIAN_KINDS}")
        require(bool(self.k_spec), "k_spec must not be empty")
        require(bool(self.rewire_fractions), "rewire_fractions must not be empty")
        require(all(0.0 < f <= 1.0 for f in self.rewire_fractions), "rewire_fractions must lie in (0, 1]")
        require(all(0.0 < f <= 1.0 for f in self.partiality_levels), "partiality_levels must lie in (0, 1]")
        require(0.0 < self.subgraph_fraction <= 1.0, "subgraph_fraction must lie in (0, 1]")
        require(all(p in PARTIALITY_KINDS for p in self.partiality), f"partiality must be among {PARTIALITY_KINDS}")
        require(self.noise_sigma >= 0.0, "noise_sigma must be non-negative")
        require(self.map_size >= 1, "map_size must be at least 1")
        require(self.energy_band >= 0, "energy_band must be non-negative")
        require(self.rwpe_dim >= 1, "rwpe_dim must be at least 1")
        require(self.seeds >= 1, "seeds must be at least 1")
        require(self.landmarks >= 0, "landmarks must be non-negative")
        require(self.zoomout_step >= 1, "zoomout_step must be at least 1")
        require(self.workers is None or self.workers >= 1, "workers must be at least 1")
        try:
            self.regularizer
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        """Build from a mapping keyed by field names.

        Raises:
            ConfigError: unknown keys or invalid values
        """
        known = {a.name for a in attrs.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid config: {e}") from None

    def to_dict(self) -> dict[str, Any]:
        return attrs.asdict(self)

    @property
    def config_hash(self) -> str:
        """Digest of the canonical JSON form; stamped on every result row."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @property
    def regularizer(self) -> RegularizerConfig:
        return RegularizerConfig(self.mu_mask, self.mu_orth, self.mask_width, self.mask_floor)

    @property
    def seed_values(self) -> list[int]:
        return [self.rng_seed + i for i in range(self.seeds)]

    def load_graph(self) -> Graph:
        if self.graph_path:
            return load_edge_list(self.graph_path)
        return load_dataset(self.dataset, self.dataset_params)


def load_config(path: str | PathLike, **overrides) -> ExperimentConfig:
    """Read a TOML or JSON config file; keyword overrides win over file values.

    Raises:
        ConfigError: unreadable file, unknown format, unknown keys or invalid values
    """
    path = Path(path)
    try:
        match path.suffix.lower():
            case ".toml":
                with path.open("rb") as f:
                    data = tomllib.load(f)
            case ".json":
                with path.open() as f:
                    data = json.load(f)
            case _:
                raise ConfigError(f"config must be .toml or .json, got {path.name}")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from None

    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a table of settings")
    data.update({key: value for key, value in overrides.items() if value is not None})
    return ExperimentConfig.from_dict(data)


@attrs.frozen
class ResultRow:
    experiment: str
    parameter: str
    metric: str
    value: float
    seed: int
    config_hash: str

    def to_dict(self) -> dict[str, Any]:
        return attrs.asdict(self)


@attrs.define
class ResultTable:
    """Append-only result rows sharing one config hash."""

    config_hash: str
    _rows: list[ResultRow] = attrs.field(factory=list, alias="rows")

    @property
    def rows(self) -> tuple[ResultRow, ...]:
        return tuple(self._rows)

    def __len__(self):
        return len(self._rows)

    def add(self, experiment: str, parameter: str, metric: str, value: float, seed: int):
        self._rows.append(ResultRow(experiment, parameter, metric, float(value), seed, self.config_hash))

    def values(self, experiment: str, parameter: str, metric: str) -> list[float]:
        return [r.value for r in self._rows if (r.experiment, r.parameter, r.metric) == (experiment, parameter, metric)]

    def median(self, experiment: str, parameter: str, metric: str) -> float:
        """Median across seeds of one (experiment, parameter, metric) cell.

        Raises:
            KeyError: no such rows
        """
        values = self.values(experiment, parameter, metric)
        if not values:
            raise KeyError((experiment, parameter, metric))
        return statistics.median(values)

    def summary(self) -> list[tuple[str, str, str, float, int]]:
        """Per-cell medians in order of first appearance."""
        cells: dict[tuple[str, str, str], list[float]] = {}
        for r in self._rows:
            cells.setdefault((r.experiment, r.parameter, r.metric), []).append(r.value)
        return [(*key, statistics.median(values), len(values)) for key, values in cells.items()]

    def write(self, out_dir: str | PathLike, config: ExperimentConfig) -> Path:
        """Write ``results.csv``, ``summary.csv`` and ``config.snapshot.json`` into ``out_dir``."""
        if config.config_hash != self.config_hash:
            raise ConfigError("results were produced under a different config")

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

        with (out / "results.csv").open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(RESULT_COLUMNS)
            for r in self._rows:
                writer.writerow([r.experiment, r.parameter, r.metric, repr(r.value), r.seed, r.config_hash])

        with (out / "summary.csv").open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(SUMMARY_COLUMNS)
            for experiment, parameter, metric, median, count in self.summary():
                writer.writerow([experiment, parameter, metric, repr(median), count])

        with (out / "config.snapshot.json").open("w") as f:
            json.dump({"config_hash": self.config_hash, "config": config.to_dict()}, f, indent=2, sort_keys=True)

        logger.info("Wrote %d result rows to %s", len(self._rows), out)
        return out


type Task = Callable[[], list[tuple[str, str, float, int]]]


def _run_tasks(cfg: ExperimentConfig, experiment: str, tasks: list[Task]) -> ResultTable:
    """Run independent tasks on a bounded pool; rows are collected in submission order."""
    table = ResultTable(cfg.config_hash)
    workers = cfg.workers or env.SPECMAP_WORKERS
    started = time.perf_counter()

    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(task) for task in tasks]
        for future in futures:
            for parameter, metric, value, seed in future.result():
                table.add(experiment, parameter, metric, value, seed)

    logger.info("%s: %d tasks, %d rows in %.2fs", experiment, len(tasks), len(table), time.perf_counter() - started)
    return table


def _parallel[T](cfg: ExperimentConfig, fn: Callable[[int], T], seeds: list[int]) -> list[T]:
    with ThreadPoolExecutor(max_workers=cfg.workers or env.SPECMAP_WORKERS) as executor:
        return list(executor.map(fn, seeds))


def _dump(dump_dir: Path | None, name: str, write: Callable[[Path], None]):
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)
        write(dump_dir / name)


def _fraction_label(value: float) -> str:
    return f"{value:g}"


def run_rewiring_robustness(cfg: ExperimentConfig, *, dump_dir: str | PathLike | None = None) -> ResultTable:
    """Map change under rewiring versus Gaussian noise.

    Per seed: a patch subgraph keeping ``subgraph_fraction`` of the nodes, the
    ground-truth map from the full graph to it (``map_size`` eigenvectors),
    and for every rewiring fraction the map to the rewired subgraph. Rows:
    ``map_distance``, ``edit_fraction`` and ``diagonal_energy`` per fraction
    (including an unperturbed ``0`` row) plus ``map_distance`` under noise.
    """
    dump_dir = Path(dump_dir) if dump_dir is not None else None
    g = cfg.load_graph()
    kind = cfg.laplacian_kind
    b1 = graph_eigenbasis(g, min(cfg.map_size, g.n), kind)

    def prepare(seed: int):
        sub, S = khop_for_fraction(g, cfg.subgraph_fraction, seed, largest_component=cfg.largest_component)
        b2 = graph_eigenbasis(sub, min(cfg.map_size, sub.n), kind)
        baseline = compute_spectral_map(S, b1, b2)
        max_hop = hop_limit_for_diameter(sub) if cfg.hop_limited else None
        _dump(dump_dir, f"baseline_seed{seed}.spmp", lambda p: write_map(p, baseline))
        return seed, sub, S, baseline, max_hop

    prepared = _parallel(cfg, prepare, cfg.seed_values)

    def unperturbed(seed, baseline) -> Task:
        def task():
            return [
                ("0", "map_distance", map_distance(baseline, baseline), seed),
                ("0", "edit_fraction", 0.0, seed),
                ("0", "diagonal_energy", diagonal_energy(baseline, cfg.energy_band), seed),
            ]
        return task

    def rewired(seed, sub: Graph, S: NodeCorrespondence, baseline, max_hop, fraction) -> Task:
        def task():
            g2, record = rewire(sub, fraction, seed, max_hop=max_hop)
            b2 = graph_eigenbasis(g2, baseline.k2, kind)
            moved = compute_spectral_map(S, b1, b2)
            label = _fraction_label(fraction)
            _dump(dump_dir, f"rewire_seed{seed}_{label}.json", lambda p: write_perturbation(p, record))
            return [
                (label, "map_distance", map_distance(baseline, moved), seed),
                (label, "edit_fraction", edit_fraction(sub, g2), seed),
                (label, "diagonal_energy", diagonal_energy(moved, cfg.energy_band), seed),
            ]
        return task

    def noisy(seed, baseline) -> Task:
        def task():
            noise = gaussian_noise_map(baseline, cfg.noise_sigma, seed)
            return [(f"sigma={cfg.noise_sigma:g}", "map_distance", map_distance(baseline, noise), seed)]
        return task

    tasks: list[Task] = []
    for seed, sub, S, baseline, max_hop in prepared:
        tasks.append(unperturbed(seed, baseline))
        tasks.extend(rewired(seed, sub, S, baseline, max_hop, f) for f in cfg.rewire_fractions)
        tasks.append(noisy(seed, baseline))

    return _run_tasks(cfg, "rewiring_robustness", tasks)


def run_transfer_sweep(cfg: ExperimentConfig, *, dump_dir: str | PathLike | None = None) -> ResultTable:
    """Transfer error of random-walk positional encodings as k grows.

    The reference on the subgraph is the encoding pulled back node by node
    through the known correspondence; the estimate goes through the
    ground-truth map at each ``k_spec`` entry. With ``feature_estimate`` the
    map is also estimated from each graph's own encodings and scored as
    ``rmse_estimated``.
    """
    dump_dir = Path(dump_dir) if dump_dir is not None else None
    g = cfg.load_graph()
    kind = cfg.laplacian_kind
    raw_encoding = rw_positional_encoding(g, cfg.rwpe_dim)
    encoding = normalize_signal(raw_encoding)

    b1_full = graph_eigenbasis(g, max(resolve_k(k, g.n) for k in cfg.k_spec), kind)

    def prepare(seed: int):
        sub, S = khop_for_fraction(g, cfg.subgraph_fraction, seed, largest_component=cfg.largest_component)
        b2_full = graph_eigenbasis(sub, max(resolve_k(k, sub.n) for k in cfg.k_spec), kind)
        reference = pullback_signal(S, encoding, sub.node_ids)
        sub_encoding = rw_positional_encoding(sub, cfg.rwpe_dim) if cfg.feature_estimate else None
        return seed, sub, S, b2_full, reference, sub_encoding

    prepared = _parallel(cfg, prepare, cfg.seed_values)

    def point(seed, sub, S, b2_full, reference, sub_encoding, k) -> Task:
        def task():
            b1 = b1_full.truncate(resolve_k(k, g.n))
            b2 = b2_full.truncate(resolve_k(k, sub.n))
            C = compute_spectral_map(S, b1, b2)
            _dump(dump_dir, f"map_seed{seed}_k{k.rstrip('%')}.spmp", lambda p: write_map(p, C))
            rows = [(k, "rmse", rmse(reference, transfer_signal(C, b1, b2, encoding)), seed)]
            if sub_encoding is not None:
                F1, F2 = feature_descriptors(raw_encoding, sub_encoding)
                estimated = estimate_map(F1, F2, b1, b2, cfg.regularizer, rank_deficient="lstsq")
                rows.append((k, "rmse_estimated", rmse(reference, transfer_signal(estimated, b1, b2, encoding)), seed))
            return rows
        return task

    tasks = [point(*p, k) for p in prepared for k in cfg.k_spec]
    return _run_tasks(cfg, "transfer_sweep", tasks)


def _subgraphs(cfg: ExperimentConfig, g: Graph):
    """``(label, seed, subgraph, correspondence)`` for every partiality point."""
    for kind in cfg.partiality:
        if kind == "class_removal":
            if not cfg.labels_path:
                logger.warning("Skipping class_removal partiality: no labels_path configured")
                continue
            labels = load_node_labels(cfg.labels_path)
            classes = sorted(set(labels.values()))
            for removed in classes:
                kept = [c for c in classes if c != removed]
                if not kept:
                    continue
                sub, S = class_subgraph(g, labels, kept, largest_component=cfg.largest_component)
                yield f"class_removal:{removed}", cfg.rng_seed, sub, S
            continue

        generate = khop_for_fraction if kind == "khop" else holes_for_fraction
        for level in cfg.partiality_levels:
            for seed in cfg.seed_values:
                try:
                    sub, S = generate(g, level, seed, largest_component=cfg.largest_component)
                except SpecmapError as e:
                    raise type(e)(f"{kind} partiality at level {level:g}, seed {seed}: {e}") from e
                yield f"{kind}:{level:g}", seed, sub, S


def run_matching_eval(cfg: ExperimentConfig, *, dump_dir: str | PathLike | None = None) -> ResultTable:
    """Correspondence quality (MAP) across partiality levels and basis sizes.

    ``map_gt`` scores the ground-truth map. With ``landmarks > 0`` a map is
    also estimated from band-limited landmark indicators (``map_estimated``)
    and refined by ZoomOut up to the largest ``k_spec`` entry
    (``map_zoomout``, omitted where there is nothing to refine).
    """
    dump_dir = Path(dump_dir) if dump_dir is not None else None
    g = cfg.load_graph()
    kind = cfg.laplacian_kind
    b1_full = graph_eigenbasis(g, max(resolve_k(k, g.n) for k in cfg.k_spec), kind)

    def point(label: str, seed: int, sub: Graph, S: NodeCorrespondence) -> Task:
        def task():
            b2_full = graph_eigenbasis(sub, max(resolve_k(k, sub.n) for k in cfg.k_spec), kind)
            k_top = min(b1_full.k, b2_full.k)
            pairs = sample_landmarks(S, g, sub, cfg.landmarks, seed) if cfg.landmarks else []
            rows = []

            for k in cfg.k_spec:
                b1 = b1_full.truncate(resolve_k(k, g.n))
                b2 = b2_full.truncate(resolve_k(k, sub.n))
                C = compute_spectral_map(S, b1, b2)
                parameter = f"{label}:{k}"
                rows.append((parameter, "map_gt", mean_average_precision(recover_node_map(C, b1, b2), S), seed))
                if not pairs:
                    continue

                k_sq = min(b1.k, b2.k)
                s1, s2 = b1_full.truncate(k_sq), b2_full.truncate(k_sq)
                F1, F2 = landmark_descriptors(pairs, s1, s2)
                estimated = estimate_map(F1, F2, s1, s2, cfg.regularizer, rank_deficient="lstsq")
                rows.append((parameter, "map_estimated",
                             mean_average_precision(recover_node_map(estimated, s1, s2), S), seed))
                if k_sq < k_top:
                    refined = zoomout_refine(estimated, b1_full, b2_full, cfg.zoomout_step, k_top)
                    t1, t2 = b1_full.truncate(k_top), b2_full.truncate(k_top)
                    rows.append((parameter, "map_zoomout",
                                 mean_average_precision(recover_node_map(refined, t1, t2), S), seed))
                    _dump(dump_dir, f"zoomout_{label.replace(':', '_')}_{k.rstrip('%')}_seed{seed}.spmp",
                          lambda p: write_map(p, refined))
            return rows
        return task

    tasks = [point(*item) for item in _subgraphs(cfg, g)]
    return _run_tasks(cfg, "matching_eval", tasks)


EXPERIMENTS: dict[str, Callable[..., ResultTable]] = {
    "rewire-robustness": run_rewiring_robustness,
    "transfer-sweep": run_transfer_sweep,
    "matching-eval": run_matching_eval,
}
