"""Batch-file format exactness and the synthetic corpus contract."""

import numpy as np
import pytest

from pcdyn.data import (
    IMAGE_BYTES,
    RECORD_BYTES,
    Dataset,
    ingest_cifar10,
    load_dataset,
    read_batch_file,
    synthesize_corpus,
    write_batch_files,
)


def test_format_constants():
    assert RECORD_BYTES == 3073 == 1 + IMAGE_BYTES
    assert IMAGE_BYTES == 3 * 32 * 32


def test_write_then_read_round_trip_two_records(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(2, 3, 32, 32), dtype=np.uint8)
    labels = np.array([3, 7], dtype=np.int64)
    (path,) = write_batch_files(str(tmp_path), images, labels)

    blob = open(path, "rb").read()
    assert len(blob) == 2 * RECORD_BYTES
    assert blob[0] == 3 and blob[RECORD_BYTES] == 7

    ds = read_batch_file(path)
    assert np.array_equal(ds.labels, labels)
    # /255 scaling round-trips every byte value exactly
    recovered = np.rint(ds.images * 255).astype(np.uint8)
    assert np.array_equal(recovered, images)
    # re-encoding reproduces the original bytes
    rows = np.empty((2, RECORD_BYTES), dtype=np.uint8)
    rows[:, 0] = ds.labels
    rows[:, 1:] = recovered.reshape(2, IMAGE_BYTES)
    assert rows.tobytes() == blob


def test_pixel_scaling_endpoints(tmp_path):
    images = np.zeros((1, 3, 32, 32), dtype=np.uint8)
    images[0, 0, 0, 0] = 255
    write_batch_files(str(tmp_path), images, np.array([0]))
    ds = read_batch_file(str(tmp_path / "data_batch_1.bin"))
    assert ds.images[0, 0, 0, 0] == 1.0
    assert ds.images[0, 0, 0, 1] == 0.0
    assert ds.images.dtype == np.float32


def test_full_size_batch_constant(tmp_path):
    images = np.zeros((10000, 3, 32, 32), dtype=np.uint8)
    labels = np.zeros(10000, dtype=np.int64)
    (path,) = write_batch_files(str(tmp_path), images, labels)
    import os
    assert os.path.getsize(path) == 10000 * RECORD_BYTES == 30730000
    assert len(read_batch_file(path)) == 10000


def test_truncated_file_names_byte_offset(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * (2 * RECORD_BYTES + 100))
    with pytest.raises(ValueError) as err:
        read_batch_file(str(path))
    assert str(2 * RECORD_BYTES) in str(err.value)


def test_bad_label_names_byte_offset(tmp_path):
    blob = bytearray(2 * RECORD_BYTES)
    blob[RECORD_BYTES] = 17
    path = tmp_path / "label.bin"
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError) as err:
        read_batch_file(str(path))
    assert "17" in str(err.value) and str(RECORD_BYTES) in str(err.value)


def test_directory_ingestion_is_name_ordered(tmp_path):
    rng = np.random.default_rng(1)
    images = rng.integers(0, 256, size=(6, 3, 32, 32), dtype=np.uint8)
    labels = np.arange(6) % 10
    write_batch_files(str(tmp_path), images, labels, records_per_file=3)
    ds = ingest_cifar10(str(tmp_path))
    assert len(ds) == 6
    assert np.array_equal(ds.labels, labels)
    with pytest.raises(FileNotFoundError):
        ingest_cifar10(str(tmp_path / "empty_subdir_missing"))


def test_dataset_helpers():
    rng = np.random.default_rng(2)
    ds = Dataset(rng.uniform(0, 1, (5, 3, 32, 32)).astype(np.float32),
                 np.arange(5, dtype=np.int64))
    assert len(ds.take(3)) == 3
    assert np.array_equal(ds.subset([0, 4]).labels, [0, 4])
    with pytest.raises(ValueError):
        ds.take(9)
    with pytest.raises(ValueError):
        Dataset(ds.images, np.zeros(4, dtype=np.int64))


# ------------------------------------------------------------ synthetic corpus


def test_synthetic_corpus_is_deterministic_and_covers_classes():
    a_img, a_lab = synthesize_corpus(200, seed=3)
    b_img, b_lab = synthesize_corpus(200, seed=3)
    assert np.array_equal(a_img, b_img) and np.array_equal(a_lab, b_lab)
    assert a_img.dtype == np.uint8 and a_img.shape == (200, 3, 32, 32)
    assert set(np.unique(a_lab)) == set(range(10))
    c_img, _ = synthesize_corpus(200, seed=4)
    assert not np.array_equal(a_img, c_img)


def test_synthetic_classes_are_distinct():
    images, labels = synthesize_corpus(500, seed=5)
    x = images.astype(np.float64) / 255.0
    # per-class mean spectra differ: class identity is recoverable from the
    # image statistics, not just noise
    profiles = np.stack([
        np.abs(np.fft.rfft2(x[labels == c, 0]).mean(axis=0)) for c in range(10)
    ])
    flat = profiles.reshape(10, -1)
    gaps = []
    for c in range(10):
        for d in range(c + 1, 10):
            gaps.append(np.linalg.norm(flat[c] - flat[d]))
    assert min(gaps) > 1e-3


def test_load_dataset_synthetic_split(monkeypatch):
    monkeypatch.delenv("PCDYN_CIFAR10_DIR", raising=False)
    train, val = load_dataset(64, 16, seed=6)
    assert len(train) == 64 and len(val) == 16
    assert train.images.dtype == np.float32
    assert train.images.min() >= 0.0 and train.images.max() <= 1.0
    train2, val2 = load_dataset(64, 16, seed=6)
    assert np.array_equal(train.images, train2.images)
    assert np.array_equal(val.labels, val2.labels)
    # val continues the same stream, not a reshuffle of train
    assert not np.array_equal(train.images[:16], val.images)


def test_load_dataset_reads_real_layout(tmp_path, monkeypatch):
    rng = np.random.default_rng(7)
    train_u8 = rng.integers(0, 256, size=(8, 3, 32, 32), dtype=np.uint8)
    test_u8 = rng.integers(0, 256, size=(4, 3, 32, 32), dtype=np.uint8)
    write_batch_files(str(tmp_path), train_u8, np.arange(8) % 10, records_per_file=4)
    write_batch_files(str(tmp_path), test_u8, np.arange(4) % 10, prefix="test_batch")
    monkeypatch.setenv("PCDYN_CIFAR10_DIR", str(tmp_path))
    train, val = load_dataset(6, 3, seed=0)
    assert len(train) == 6 and len(val) == 3
    assert np.array_equal(np.rint(train.images * 255).astype(np.uint8), train_u8[:6])
    assert np.array_equal(np.rint(val.images * 255).astype(np.uint8), test_u8[:3])
