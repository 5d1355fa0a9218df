"""Experiment orchestration: features, tuning, training, evaluation.

Reproduces the structure of the per-feature-type and per-aggregator
ablations: for every feature configuration and split repetition, the
cost parameter is tuned by cross-validation on the training rows only,
a one-vs-rest model is trained with the winning cost, and test accuracy
is recorded. Base descriptors are extracted once per image and reused by
all configurations; they can be cached on disk in the ``HDFC`` format.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from .cache import FeatureRecord, load_cache, save_cache
from .classifier import (C_GRID, GridSearchReport, evaluate, grid_search_c, train_ovr)
from .datasets import DatasetManifest, SplitPlan, SplitProtocol, make_split
from .imageio import read_raster
from .pipeline import (FEATURE_DIM, POOL_OPS, SOURCES, Backend,
                       extract_base_features, fuse_matrix)

logger = logging.getLogger(__name__)

_TUNE_STREAM = 0x7A11
FEATURE_TYPES = ("op", "ow", "sp", "sw", "hdf")


@dataclass(frozen=True)
class FeatureConfig:
    """One row of the ablation: a feature type, plus a pool op for hdf."""

    feature_type: str
    pool_op: str | None = None

    def __post_init__(self):
        if self.feature_type not in FEATURE_TYPES:
            raise ValueError(f"unknown feature type {self.feature_type!r}")
        if self.feature_type == "hdf":
            if self.pool_op not in POOL_OPS:
                raise ValueError(f"hdf needs a pool op from {POOL_OPS}")
        elif self.pool_op is not None:
            raise ValueError(f"{self.feature_type} takes no pool op")

    @property
    def name(self) -> str:
        if self.feature_type == "hdf":
            return f"HDF-{self.pool_op}"
        return self.feature_type.upper()

    @property
    def dim(self) -> int:
        return 4 * FEATURE_DIM if self.pool_op == "concat" else FEATURE_DIM


def default_configs() -> tuple[FeatureConfig, ...]:
    """The full ablation: four single types plus hdf under every pool op."""
    singles = tuple(FeatureConfig(t) for t in ("op", "ow", "sp", "sw"))
    hybrids = tuple(FeatureConfig("hdf", op) for op in POOL_OPS)
    return singles + hybrids


@dataclass(frozen=True)
class ConfigResult:
    name: str
    feature_type: str
    pool_op: str | None
    per_repetition_accuracy: tuple[float, ...]
    mean_accuracy: float
    chosen_c: tuple[int, ...]


@dataclass(frozen=True)
class ExperimentReport:
    dataset: str
    seed: int
    folds: int
    protocol: dict
    results: tuple[ConfigResult, ...]
    complete: bool = True

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "seed": self.seed,
            "folds": self.folds,
            "protocol": self.protocol,
            "complete": self.complete,
            "configurations": [
                {
                    "name": r.name,
                    "feature_type": r.feature_type,
                    "pool_op": r.pool_op,
                    "per_repetition_accuracy": list(r.per_repetition_accuracy),
                    "mean_accuracy": r.mean_accuracy,
                    "chosen_c": list(r.chosen_c),
                }
                for r in self.results
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def pair_digest(object_backend: Backend, scene_backend: Backend) -> str:
    """Content hash of both weight bundles; keys the feature caches."""
    h = hashlib.sha256()
    for backend in (object_backend, scene_backend):
        h.update(backend.kind.encode())
        h.update(np.asarray(backend.weights.means, dtype="<f4").tobytes())
        for entry in backend.weights.entries:
            h.update(entry.name.encode())
            h.update(np.ascontiguousarray(entry.kernel, dtype="<f4").tobytes())
            h.update(np.ascontiguousarray(entry.bias, dtype="<f4").tobytes())
    return h.hexdigest()[:16]


def _cache_path(cache_dir: str, dataset: str, source: str, digest: str) -> str:
    return os.path.join(cache_dir, f"{dataset}_{source}_{digest}.hdfc")


def _try_load_base(cache_dir, dataset, digest, paths, labels):
    mats = {}
    for source in SOURCES:
        path = _cache_path(cache_dir, dataset, source, digest)
        if not os.path.isfile(path):
            return None
        dim, records = load_cache(path, expect_dim=FEATURE_DIM)
        if len(records) != len(paths):
            return None
        if any(r.path != p or r.label != int(l)
               for r, p, l in zip(records, paths, labels)):
            return None
        mats[source] = np.stack([r.values for r in records])
    logger.info("loaded cached base features from %s", cache_dir)
    return mats


def compute_base_features(
    manifest: DatasetManifest,
    object_backend: Backend,
    scene_backend: Backend,
    cache_dir: str | None = None,
):
    """Per-image op/ow/sp/sw matrices for a whole dataset.

    Returns (matrices, labels, paths) with matrices mapping each source to
    an (N, 512) float32 array in manifest order. When `cache_dir` is given,
    matching caches are reused and fresh results are written back.
    """
    paths, labels = manifest.flat_paths_labels()
    digest = pair_digest(object_backend, scene_backend)
    if cache_dir:
        cached = _try_load_base(cache_dir, manifest.name, digest, paths, labels)
        if cached is not None:
            return cached, labels, paths

    mats = {s: np.empty((len(paths), FEATURE_DIM), dtype=np.float32) for s in SOURCES}
    for i, path in enumerate(paths):
        raster = read_raster(path)
        base = extract_base_features(object_backend, scene_backend, raster)
        for source in SOURCES:
            mats[source][i] = base[source].values

    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        for source in SOURCES:
            records = [
                FeatureRecord(label=int(l), path=p, values=mats[source][i])
                for i, (p, l) in enumerate(zip(paths, labels))
            ]
            save_cache(_cache_path(cache_dir, manifest.name, source, digest),
                       FEATURE_DIM, records)
    return mats, labels, paths


def config_matrix(base: dict[str, np.ndarray], config: FeatureConfig) -> np.ndarray:
    """The design matrix for one configuration, derived from base features."""
    if config.feature_type == "hdf":
        return fuse_matrix(base, config.pool_op)
    return np.asarray(base[config.feature_type], dtype=np.float32)


def tune_cost(
    features: np.ndarray,
    labels: np.ndarray,
    train_idx: np.ndarray,
    folds: int,
    seed: int,
    c_values=C_GRID,
) -> GridSearchReport:
    """Grid-search the cost on training rows only.

    This is the single seam through which tuning touches the feature
    matrix, which is what makes the no-test-leakage property checkable by
    instrumenting `features` row access.
    """
    return grid_search_c(features[train_idx], labels[train_idx],
                         folds=folds, seed=seed, c_values=c_values)


def _tune_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([int(seed), _TUNE_STREAM, rep]).generate_state(1)[0])


def _flat_indices(manifest: DatasetManifest, per_class) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.cumsum([0] + [len(paths) for _, paths in manifest.classes[:-1]])
    train = []
    test = []
    for offset, (train_idx, test_idx) in zip(offsets, per_class):
        train.append(offset + np.asarray(train_idx, dtype=np.intp))
        test.append(offset + np.asarray(test_idx, dtype=np.intp))
    return np.concatenate(train), np.concatenate(test)


def run_experiment(
    manifest: DatasetManifest,
    object_backend: Backend,
    scene_backend: Backend,
    protocol: SplitProtocol,
    configs: tuple[FeatureConfig, ...] | None = None,
    folds: int = 5,
    c_values=C_GRID,
    plan: SplitPlan | None = None,
    cache_dir: str | None = None,
    out_path: str | None = None,
) -> ExperimentReport:
    """Run the full ablation; deterministic in (dataset, protocol, backends).

    If `out_path` is given the report JSON is written there, including a
    partial report (complete=false) when a configuration fails mid-run.
    """
    configs = default_configs() if configs is None else tuple(configs)
    if plan is None:
        plan = make_split(manifest, protocol)
    base, labels, _ = compute_base_features(
        manifest, object_backend, scene_backend, cache_dir
    )

    protocol_doc = {
        "kind": protocol.kind,
        "train_per_class": protocol.train_per_class,
        "test_per_class": protocol.test_per_class,
        "repetitions": protocol.repetitions,
    }
    results: list[ConfigResult] = []

    def build_report(complete: bool) -> ExperimentReport:
        return ExperimentReport(
            dataset=manifest.name,
            seed=protocol.seed,
            folds=folds,
            protocol=protocol_doc,
            results=tuple(results),
            complete=complete,
        )

    try:
        for config in configs:
            X = config_matrix(base, config)
            per_rep = []
            chosen = []
            for rep, per_class in enumerate(plan.repetitions):
                train_idx, test_idx = _flat_indices(manifest, per_class)
                report = tune_cost(X, labels, train_idx, folds,
                                   _tune_seed(protocol.seed, rep), c_values)
                model = train_ovr(X[train_idx], labels[train_idx], report.chosen_c)
                per_rep.append(evaluate(model, X[test_idx], labels[test_idx]))
                chosen.append(report.chosen_c)
            results.append(ConfigResult(
                name=config.name,
                feature_type=config.feature_type,
                pool_op=config.pool_op,
                per_repetition_accuracy=tuple(per_rep),
                mean_accuracy=sum(per_rep) / len(per_rep),
                chosen_c=tuple(chosen),
            ))
    except Exception:
        if out_path:  # flush what finished before propagating
            _write_report(build_report(complete=False), out_path)
        raise

    report = build_report(complete=True)
    if out_path:
        _write_report(report, out_path)
    return report


def _write_report(report: ExperimentReport, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())


_AGG_LABELS = {"max": "Max", "mean": "Mean", "min": "Min", "concat": "Concat"}


def format_table(report: ExperimentReport) -> str:
    """Human-readable tables mirroring the two ablation layouts."""
    by_name = {r.name: r for r in report.results}
    lines = [
        f"dataset: {report.dataset}   seed: {report.seed}   "
        f"repetitions: {report.protocol['repetitions']}   folds: {report.folds}"
    ]

    def row(label: str, r: ConfigResult) -> str:
        reps = " ".join(f"{a * 100:6.2f}" for a in r.per_repetition_accuracy)
        cs = ",".join(str(c) for c in r.chosen_c)
        return f"  {label:<8} {r.mean_accuracy * 100:6.2f}   [{reps}]   C={cs}"

    singles = [n for n in ("OP", "OW", "SP", "SW") if n in by_name]
    if singles:
        lines.append("feature types (mean accuracy %, per-repetition, chosen C):")
        for name in singles:
            lines.append(row(name, by_name[name]))
        if "HDF-concat" in by_name:
            lines.append(row("HDF", by_name["HDF-concat"]))
    aggs = [op for op in POOL_OPS if f"HDF-{op}" in by_name]
    if aggs:
        lines.append("hybrid aggregators (mean accuracy %, per-repetition, chosen C):")
        for op in aggs:
            lines.append(row(_AGG_LABELS[op], by_name[f"HDF-{op}"]))
    return "\n".join(lines) + "\n"
