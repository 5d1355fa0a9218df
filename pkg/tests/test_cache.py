import numpy as np
import pytest

from scenefuse.cache import (
    CacheBadMagicError, CacheDimensionError, CacheFileError, CacheTruncatedError,
    CacheVersionError, FeatureRecord, load_cache, save_cache,
)


@pytest.fixture
def records(rng):
    return [
        FeatureRecord(label=i % 3, path=f"images/class_{i % 3}/img_{i}.ppm",
                      values=rng.normal(0, 1, 16).astype(np.float32))
        for i in range(7)
    ]


def test_round_trip_bit_identical(records, tmp_path):
    path = tmp_path / "f.hdfc"
    save_cache(str(path), 16, records)
    first = path.read_bytes()
    dim, loaded = load_cache(str(path))
    assert dim == 16
    assert [(r.label, r.path) for r in loaded] == [(r.label, r.path) for r in records]
    for a, b in zip(loaded, records):
        assert np.array_equal(a.values, b.values)
    save_cache(str(path), 16, loaded)
    assert path.read_bytes() == first


def test_bad_magic(records, tmp_path):
    path = tmp_path / "f.hdfc"
    save_cache(str(path), 16, records)
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(CacheBadMagicError):
        load_cache(str(path))


def test_truncated(records, tmp_path):
    path = tmp_path / "f.hdfc"
    save_cache(str(path), 16, records)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(CacheTruncatedError):
        load_cache(str(path))


def test_version_rejected(records, tmp_path):
    import struct

    path = tmp_path / "f.hdfc"
    save_cache(str(path), 16, records)
    data = bytearray(path.read_bytes())
    struct.pack_into("<I", data, 4, 9)
    path.write_bytes(bytes(data))
    with pytest.raises(CacheVersionError):
        load_cache(str(path))


def test_dimension_mismatch_on_expectation(records, tmp_path):
    path = tmp_path / "f.hdfc"
    save_cache(str(path), 16, records)
    with pytest.raises(CacheDimensionError, match="16"):
        load_cache(str(path), expect_dim=2048)


def test_record_dim_checked_on_save(records, tmp_path):
    with pytest.raises(CacheDimensionError):
        save_cache(str(tmp_path / "f.hdfc"), 32, records)


def test_trailing_bytes_rejected(records, tmp_path):
    path = tmp_path / "f.hdfc"
    save_cache(str(path), 16, records)
    path.write_bytes(path.read_bytes() + b"z")
    with pytest.raises(CacheFileError, match="trailing"):
        load_cache(str(path))
