import struct

import numpy as np
import pytest

from mfpaths.datasets import (BiasAugmentedStream, GaussianStream,
                              GaussianTaskSpec, IdxBadMagic,
                              IdxCountMismatch, IdxTruncated, LabeledDataset,
                              append_bias_feature, apply_normalization,
                              dataset_from_stream, gaussian_stream, load_idx,
                              normalize_zero_mean_unit_var, write_idx)


def test_spec_validation():
    with pytest.raises(ValueError, match="delta"):
        GaussianTaskSpec(d=4, delta=-1.0)
    with pytest.raises(ValueError, match="d must be positive"):
        GaussianTaskSpec(d=0)


def test_same_seed_same_samples():
    a = GaussianStream(GaussianTaskSpec(8, 0.5, 11))
    b = GaussianStream(GaussianTaskSpec(8, 0.5, 11))
    xa, ya = a.next_batch(1000)
    xb, yb = b.next_batch(1000)
    assert np.array_equal(xa, xb) and np.array_equal(ya, yb)


def test_consumption_pattern_does_not_change_sequence():
    spec = GaussianTaskSpec(5, 0.5, 3)
    batched = GaussianStream(spec).next_batch(300)
    single = GaussianStream(spec)
    xs, ys = [], []
    for _ in range(300):
        x, y = single.next_batch(1)
        xs.append(x[0])
        ys.append(y[0])
    assert np.array_equal(batched[0], np.array(xs))
    assert np.array_equal(batched[1], np.array(ys))


def test_label_frequencies_balanced():
    x, y = GaussianStream(GaussianTaskSpec(4, 0.5, 17)).next_batch(100_000)
    frac_pos = np.mean(y[:, 0] > 0)
    assert abs(frac_pos - 0.5) < 0.01


def test_per_class_variance():
    # conditional on y=+1 the per-coordinate variance is (1+delta)^2 = 2.25
    x, y = GaussianStream(GaussianTaskSpec(32, 0.5, 23)).next_batch(100_000)
    pos = x[y[:, 0] > 0]
    var = pos.var(axis=0).mean()
    assert abs(var - 2.25) / 2.25 < 0.05


def test_delta_zero_collapses_classes():
    x, y = GaussianStream(GaussianTaskSpec(6, 0.0, 29)).next_batch(10_000)
    v_pos = x[y[:, 0] > 0].var(axis=0)
    v_neg = x[y[:, 0] < 0].var(axis=0)
    assert np.all(np.abs(v_pos - v_neg) / v_neg < 0.10)


def test_gaussian_stream_factory_and_iter():
    stream = gaussian_stream(GaussianTaskSpec(3, 0.5, 1))
    sample = next(iter(stream))
    assert sample.x.shape == (3,) and sample.y.shape == (1,)
    assert sample.y[0] in (-1.0, 1.0)


def test_bias_augmentation():
    stream = BiasAugmentedStream(GaussianStream(GaussianTaskSpec(4, 0.5, 5)))
    x, _ = stream.next_batch(10)
    assert x.shape == (10, 5) and np.all(x[:, -1] == 1.0)
    ds = dataset_from_stream(GaussianStream(GaussianTaskSpec(4, 0.5, 5)), 10)
    aug = append_bias_feature(ds)
    assert aug.d == 5 and np.all(aug.x[:, -1] == 1.0)


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------

def _fixture_idx_bytes():
    # two 2x2 images with hand-picked pixel bytes, labels 3 and 7
    images = struct.pack(">iiii", 0x00000803, 2, 2, 2)
    images += bytes([0, 128, 255, 1, 17, 34, 51, 68])
    labels = struct.pack(">ii", 0x00000801, 2) + bytes([3, 7])
    return images, labels


def test_load_idx_fixture(tmp_path):
    images, labels = _fixture_idx_bytes()
    (tmp_path / "img").write_bytes(images)
    (tmp_path / "lab").write_bytes(labels)
    ds = load_idx(tmp_path / "img", tmp_path / "lab")
    assert ds.d == 4 and len(ds) == 2 and ds.classes == 10
    assert np.array_equal(ds.x[0], [0.0, 128.0, 255.0, 1.0])
    assert np.array_equal(ds.x[1], [17.0, 34.0, 51.0, 68.0])
    assert ds.y[0, 3] == 1.0 and ds.y[0].sum() == 1.0
    assert ds.y[1, 7] == 1.0


def test_idx_roundtrip_bytes(tmp_path):
    images, labels = _fixture_idx_bytes()
    (tmp_path / "img").write_bytes(images)
    (tmp_path / "lab").write_bytes(labels)
    ds = load_idx(tmp_path / "img", tmp_path / "lab")
    write_idx(ds, tmp_path / "img2", tmp_path / "lab2", rows=2, cols=2)
    assert (tmp_path / "img2").read_bytes() == images
    assert (tmp_path / "lab2").read_bytes() == labels


def test_idx_bad_magic(tmp_path):
    images, labels = _fixture_idx_bytes()
    (tmp_path / "img").write_bytes(images)
    (tmp_path / "lab").write_bytes(struct.pack(">ii", 0xBAD, 2) + bytes([3, 7]))
    with pytest.raises(IdxBadMagic, match="bad magic"):
        load_idx(tmp_path / "img", tmp_path / "lab")
    (tmp_path / "img_bad").write_bytes(struct.pack(">i", 0x99) + images[4:])
    with pytest.raises(IdxBadMagic):
        load_idx(tmp_path / "img_bad", tmp_path / "lab")


def test_idx_truncated(tmp_path):
    images, labels = _fixture_idx_bytes()
    (tmp_path / "img").write_bytes(images[:-3])
    (tmp_path / "lab").write_bytes(labels)
    with pytest.raises(IdxTruncated, match="truncated"):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_idx_count_mismatch(tmp_path):
    images, _ = _fixture_idx_bytes()
    (tmp_path / "img").write_bytes(images)
    (tmp_path / "lab").write_bytes(struct.pack(">ii", 0x00000801, 1) + bytes([3]))
    with pytest.raises(IdxCountMismatch):
        load_idx(tmp_path / "img", tmp_path / "lab")


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def test_normalize_statistics():
    rng = np.random.default_rng(0)
    ds = LabeledDataset(rng.normal(3, 2, (100, 8)), np.ones((100, 1)), 2)
    normed, mean, std = normalize_zero_mean_unit_var(ds)
    assert np.all(np.abs(normed.x.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(normed.x.var(axis=0) - 1.0) < 1e-10)
    again = apply_normalization(ds, mean, std)
    assert np.array_equal(again.x, normed.x)  # stats reproduce the transform


def test_normalize_idempotent_on_fixed_stats():
    rng = np.random.default_rng(1)
    ds = LabeledDataset(rng.normal(0, 1, (500, 4)), np.ones((500, 1)), 2)
    once, _, _ = normalize_zero_mean_unit_var(ds)
    twice, _, _ = normalize_zero_mean_unit_var(once)
    assert np.all(np.abs(twice.x - once.x) < 1e-10)


def test_normalize_constant_coordinate():
    x = np.ones((50, 3))
    x[:, 1] = np.arange(50)
    ds = LabeledDataset(x, np.ones((50, 1)), 2)
    normed, _, std = normalize_zero_mean_unit_var(ds)
    assert std[0] == 0.0
    assert np.all(normed.x[:, 0] == 0.0)


def test_normalize_empty_rejected():
    ds = LabeledDataset(np.empty((0, 3)), np.empty((0, 1)), 2)
    with pytest.raises(ValueError, match="empty"):
        normalize_zero_mean_unit_var(ds)
