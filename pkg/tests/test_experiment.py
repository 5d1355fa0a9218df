import json

import numpy as np
import pytest

from scenefuse.datasets import SplitProtocol
from scenefuse.experiment import (
    FeatureConfig, compute_base_features, config_matrix, default_configs,
    format_table, pair_digest, run_experiment, tune_cost,
)
from scenefuse.pipeline import SOURCES


@pytest.fixture(scope="module")
def small_protocol():
    return SplitProtocol("fixed_per_class", 5, 1, 1, seed=3)


@pytest.fixture(scope="module")
def run(tiny_dataset, stub_pair, small_protocol, tmp_path_factory):
    root, manifest = tiny_dataset
    obj, scn = stub_pair
    out = tmp_path_factory.mktemp("exp") / "report.json"
    report = run_experiment(manifest, obj, scn, small_protocol,
                            folds=5, c_values=range(1, 11),
                            out_path=str(out))
    return report, out


class TestConfigs:
    def test_default_set(self):
        names = [c.name for c in default_configs()]
        assert names == ["OP", "OW", "SP", "SW",
                         "HDF-max", "HDF-mean", "HDF-min", "HDF-concat"]

    def test_validation(self):
        with pytest.raises(ValueError, match="pool"):
            FeatureConfig("hdf")
        with pytest.raises(ValueError, match="no pool"):
            FeatureConfig("ow", "max")
        with pytest.raises(ValueError, match="unknown"):
            FeatureConfig("bof")

    def test_dims(self):
        assert FeatureConfig("hdf", "concat").dim == 2048
        assert FeatureConfig("hdf", "mean").dim == 512
        assert FeatureConfig("op").dim == 512


class TestBaseFeatures:
    def test_matrices_and_cache_round_trip(self, tiny_dataset, stub_pair, tmp_path):
        root, manifest = tiny_dataset
        obj, scn = stub_pair
        cache_dir = tmp_path / "cache"
        base, labels, paths = compute_base_features(manifest, obj, scn,
                                                    cache_dir=str(cache_dir))
        n = manifest.total_images
        assert sorted(base) == sorted(SOURCES)
        for mat in base.values():
            assert mat.shape == (n, 512)
        assert len(paths) == n
        digest = pair_digest(obj, scn)
        assert len(list(cache_dir.glob(f"*_{digest}.hdfc"))) == 4

        again, labels2, _ = compute_base_features(manifest, obj, scn,
                                                  cache_dir=str(cache_dir))
        assert np.array_equal(labels, labels2)
        for s in SOURCES:
            assert np.array_equal(base[s], again[s])

    def test_config_matrix_shapes(self, rng):
        base = {s: rng.normal(0, 1, (6, 512)).astype(np.float32) for s in SOURCES}
        assert config_matrix(base, FeatureConfig("sw")).shape == (6, 512)
        assert config_matrix(base, FeatureConfig("hdf", "concat")).shape == (6, 2048)


class TestTuneSeam:
    def test_tuning_reads_only_training_rows(self, rng):
        accessed = []

        class Tracking(np.ndarray):
            def __getitem__(self, item):
                if isinstance(item, np.ndarray) and item.dtype != bool:
                    accessed.extend(int(i) for i in np.ravel(item))
                return super().__getitem__(item)

        X = rng.normal(0, 1, (30, 6)).view(Tracking)
        labels = np.repeat([0, 1, 2], 10)
        train_idx = np.concatenate([np.arange(0, 7), np.arange(10, 17),
                                    np.arange(20, 27)])
        test_idx = np.setdiff1d(np.arange(30), train_idx)
        tune_cost(X, labels, train_idx, folds=3, seed=0, c_values=range(1, 4))
        assert accessed, "instrumentation saw no row access"
        assert not set(accessed) & set(test_idx.tolist())


class TestRunExperiment:
    def test_report_structure(self, run, small_protocol):
        report, out = run
        names = [r.name for r in report.results]
        assert names == ["OP", "OW", "SP", "SW",
                         "HDF-max", "HDF-mean", "HDF-min", "HDF-concat"]
        for r in report.results:
            assert len(r.per_repetition_accuracy) == small_protocol.repetitions
            assert len(r.chosen_c) == small_protocol.repetitions
            assert all(1 <= c <= 100 for c in r.chosen_c)
            assert r.mean_accuracy == pytest.approx(
                sum(r.per_repetition_accuracy) / len(r.per_repetition_accuracy),
                abs=1e-9)
        assert report.complete

    def test_report_written_and_parses(self, run):
        report, out = run
        doc = json.loads(out.read_text())
        assert doc["complete"] is True
        assert len(doc["configurations"]) == 8
        assert doc["configurations"][0]["name"] == "OP"

    def test_rerun_identical(self, tiny_dataset, stub_pair, small_protocol, run):
        root, manifest = tiny_dataset
        obj, scn = stub_pair
        report, _ = run
        again = run_experiment(manifest, obj, scn, small_protocol,
                               folds=5, c_values=range(1, 11))
        assert again.to_json() == report.to_json()

    def test_separable_dataset_classified_perfectly(self, run):
        report, _ = run
        by_name = {r.name: r for r in report.results}
        assert by_name["HDF-concat"].mean_accuracy == 1.0

    def test_partial_flush_on_failure(self, tiny_dataset, stub_pair, small_protocol,
                                      tmp_path, monkeypatch):
        root, manifest = tiny_dataset
        obj, scn = stub_pair
        out = tmp_path / "partial.json"
        import scenefuse.experiment as exp

        calls = []
        original = exp.train_ovr

        def explode_on_third(*args, **kwargs):
            calls.append(1)
            if len(calls) >= 3:
                raise RuntimeError("boom")
            return original(*args, **kwargs)

        monkeypatch.setattr(exp, "train_ovr", explode_on_third)
        with pytest.raises(RuntimeError, match="boom"):
            run_experiment(manifest, obj, scn, small_protocol,
                           folds=5, c_values=range(1, 4), out_path=str(out))
        doc = json.loads(out.read_text())
        assert doc["complete"] is False
        assert len(doc["configurations"]) == 2  # the ones that finished

    def test_table_rows(self, run):
        report, _ = run
        table = format_table(report)
        for row in ("OP", "OW", "SP", "SW", "HDF", "Max", "Mean", "Min", "Concat"):
            assert f"  {row} " in table or f"  {row:<8}" in table
