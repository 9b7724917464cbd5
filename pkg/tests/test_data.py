# tests/test_data.py
import gzip
import os
import struct
from pathlib import Path

import numpy as np
import pytest

from labelteach.data import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    Pool,
    gen_gaussian_clusters,
    gen_half_moon,
    gen_linreg,
    load_mnist_projected,
    load_pool,
    onehot_to_pm1,
    pm1_to_onehot,
    projection_matrix,
    read_idx_images,
    read_idx_labels,
    sample_uniform,
    save_pool,
    split,
    with_splits,
)
from labelteach.errors import ConfigError, DataFormatError, DimensionError
from labelteach.numerics import SeededRng

MNIST_DIR = os.getenv("LABELTEACH_MNIST_DIR", "")
DIGITS = np.array([3, 5, 3, 1, 5, 3, 7, 5], dtype=np.uint8)


def _write_idx(tmp_path: Path, n_images=None, magic=IDX_IMAGES_MAGIC, gz=False):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(len(DIGITS), 28, 28), dtype=np.uint8)
    n = len(DIGITS) if n_images is None else n_images
    img_raw = struct.pack(">IIII", magic, n, 28, 28) + images.tobytes()
    lab_raw = struct.pack(">II", IDX_LABELS_MAGIC, len(DIGITS)) + DIGITS.tobytes()
    suffix = ".gz" if gz else ""
    img_path, lab_path = tmp_path / f"images{suffix}", tmp_path / f"labels{suffix}"
    opener = gzip.open if gz else open
    with opener(img_path, "wb") as f:
        f.write(img_raw)
    with opener(lab_path, "wb") as f:
        f.write(lab_raw)
    return img_path, lab_path, images


def test_gen_linreg_is_seeded_and_noiseless_when_asked():
    a, b = gen_linreg(50, 3, seed=4), gen_linreg(50, 3, seed=4)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)
    w = np.array([1.0, -2.0, 0.5])
    p = gen_linreg(30, 3, w_star=w, noise_sd=0.0, seed=1, intercept=2.0)
    assert np.allclose(p.Y, p.X @ w + 2.0)
    assert p.label_kind == "regression" and p.d == 3 and len(p) == 30


def test_gen_linreg_validates():
    with pytest.raises(ConfigError):
        gen_linreg(0, 3)
    with pytest.raises(DimensionError):
        gen_linreg(10, 3, w_star=np.ones(2))


def test_clusters_and_moons_are_balanced_binary_pools():
    c = gen_gaussian_clusters(25, 4, seed=0)
    m = gen_half_moon(25, seed=0)
    for pool, d in ((c, 4), (m, 2)):
        assert pool.label_kind == "binary" and pool.d == d and len(pool) == 50
        assert int(np.sum(pool.Y > 0)) == 25


def test_label_kind_conversions(binary_pool):
    oh = binary_pool.as_onehot()
    assert oh.label_kind == "onehot" and oh.n_classes == 2
    assert np.array_equal(oh.as_binary().Y, binary_pool.Y)
    assert onehot_to_pm1(pm1_to_onehot(1.0)) == 1.0
    assert onehot_to_pm1(pm1_to_onehot(-1.0)) == -1.0
    with pytest.raises(ConfigError):
        gen_linreg(5, 2).as_onehot()


def test_pool_validation():
    with pytest.raises(DataFormatError):
        Pool(np.zeros((2, 2)), np.array([0.5, 1.0]), "binary")
    with pytest.raises(DimensionError):
        Pool(np.zeros((2, 2)), np.zeros(3), "regression")
    with pytest.raises(DataFormatError):
        Pool(np.zeros((3, 1)), np.zeros(3), "regression", splits={"train": np.array([0, 1]), "val": np.array([1])})


def test_sample_uniform_is_seeded(lsr_pool):
    r1, r2 = SeededRng(9), SeededRng(9)
    a = [sample_uniform(lsr_pool, r1).id for _ in range(5)]
    b = [sample_uniform(lsr_pool, r2).id for _ in range(5)]
    assert a == b
    assert all(0 <= i < len(lsr_pool) for i in a)


def test_split_is_a_disjoint_partition(lsr_pool):
    train, val, test = split(lsr_pool, (0.6, 0.2, 0.2), SeededRng(0))
    assert (len(train), len(val), len(test)) == (120, 40, 40)
    rows = {tuple(r) for part in (train, val, test) for r in part.X}
    assert len(rows) == len(lsr_pool)
    with pytest.raises(ConfigError):
        split(lsr_pool, (0.5, 0.5, 0.5), SeededRng(0))


def test_pool_file_round_trip(tmp_path, lsr_pool):
    pool = with_splits(lsr_pool, (0.5, 0.25, 0.25), SeededRng(1))
    path = save_pool(pool, tmp_path / "nested" / "pool.npz")
    back = load_pool(path)
    assert np.array_equal(back.X, pool.X) and np.array_equal(back.Y, pool.Y)
    assert back.label_kind == pool.label_kind and back.seed == pool.seed
    assert sorted(back.splits) == ["test", "train", "val"]
    assert np.array_equal(back.splits["val"], pool.splits["val"])


def test_load_pool_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a zip file")
    with pytest.raises(DataFormatError):
        load_pool(bad)


def test_idx_readers(tmp_path):
    img, lab, images = _write_idx(tmp_path)
    assert np.array_equal(read_idx_images(img), images)
    assert np.array_equal(read_idx_labels(lab), DIGITS)


def test_idx_readers_accept_gzip(tmp_path):
    img, lab, images = _write_idx(tmp_path, gz=True)
    assert np.array_equal(read_idx_images(img), images)


def test_idx_reader_rejects_bad_magic_and_length(tmp_path):
    img, _, _ = _write_idx(tmp_path, magic=0x0801)
    with pytest.raises(DataFormatError):
        read_idx_images(img)
    img, _, _ = _write_idx(tmp_path, n_images=3)
    with pytest.raises(DataFormatError):
        read_idx_images(img)


def test_mnist_binary_projection(tmp_path):
    img, lab, images = _write_idx(tmp_path)
    pool = load_mnist_projected(img, lab, digits=(3, 5), proj_dim=6, seed=2, subset=None)
    keep = np.flatnonzero(np.isin(DIGITS, (3, 5)))
    pixels = images[keep].reshape(len(keep), -1) / 255.0
    assert pool.label_kind == "binary" and pool.d == 6
    assert np.allclose(pool.X, pixels @ projection_matrix(2, 6))
    assert pool.Y.tolist() == [1.0 if d == 3 else -1.0 for d in DIGITS[keep]]


def test_mnist_multiclass_identity(tmp_path):
    img, lab, images = _write_idx(tmp_path)
    pool = load_mnist_projected(img, lab, digits=(1, 3, 5), proj_dim=784, subset=None, identity=True)
    assert pool.label_kind == "onehot" and pool.n_classes == 3
    assert pool.X.max() <= 1.0
    with pytest.raises(ConfigError):
        load_mnist_projected(img, lab, digits=(3, 3))


def test_mnist_subset(tmp_path):
    img, lab, _ = _write_idx(tmp_path)
    pool = load_mnist_projected(img, lab, digits=(3, 5), proj_dim=4, subset=3)
    assert len(pool) == 3


@pytest.mark.skipif(not MNIST_DIR, reason="LABELTEACH_MNIST_DIR is not set")
def test_real_mnist_three_five():
    root = Path(MNIST_DIR)
    images = next(p for p in root.iterdir() if p.name.startswith("train-images"))
    labels = next(p for p in root.iterdir() if p.name.startswith("train-labels"))
    pool = load_mnist_projected(images, labels, digits=(3, 5), proj_dim=24, subset=1000)
    assert len(pool) == 1000 and pool.d == 24
