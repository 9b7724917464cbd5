# labelteach/data.py
"""
Teaching pools: synthetic generators, MNIST (IDX) ingestion with a fixed
random projection, uniform sampling, splitting and the on-disk format.

Label kinds:
  regression  Y is (n,) real
  binary      Y is (n,) in {-1, +1}
  onehot      Y is (n, K) one-hot rows

Pool file layout (numpy .npz, written by `save_pool`):
  header  0-d string array holding JSON {"format": "labelteach-pool", "version": 1,
          "d": int, "n": int, "label_kind": str, "seed": int}
  X       float64 (n, d)
  Y       float64 (n,) or (n, K)
  split_<name>  int64 index arrays, optional (train / val / test)
"""

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from labelteach.console import log
from labelteach.errors import ConfigError, DataFormatError, DimensionError, NonFiniteError
from labelteach.learners import augment
from labelteach.numerics import FloatArray, SeededRng

# =====================================================
# CONFIG
# =====================================================

LINREG_N = 800
LINREG_D = 4
LINREG_NOISE = 0.02
CLUSTER_D = 4
CLUSTER_OFFSET = 0.2
N_PER_CLASS = 400
MOON_NOISE = 0.2
MNIST_PROJ_DIM = 24
MNIST_SUBSET = 1000
MNIST_PIXELS = 784

# half-moon geometry (scikit-learn's make_moons layout):
#   class +1: (cos t, sin t),                       t in [0, pi]
#   class -1: (1 - cos t, 1 - sin t - MOON_SHIFT_Y), t in [0, pi]
MOON_SHIFT_X = 1.0
MOON_SHIFT_Y = 0.5

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

LABEL_KINDS = ("regression", "binary", "onehot")
POOL_FORMAT = "labelteach-pool"


# =====================================================
# EXAMPLE / POOL
# =====================================================

class Example(NamedTuple):
    x: FloatArray
    y_true: FloatArray
    id: int


@dataclass(frozen=True)
class Pool:
    X: FloatArray
    Y: FloatArray
    label_kind: str
    seed: int = 0
    splits: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionError("pool features must be a matrix", shape=X.shape)
        if Y.shape[0] != X.shape[0]:
            raise DimensionError("feature/label count mismatch", X=X.shape, Y=Y.shape)
        if self.label_kind not in LABEL_KINDS:
            raise ConfigError(f"unknown label kind '{self.label_kind}'")
        if not np.all(np.isfinite(X)):
            raise NonFiniteError("pool features have non-finite entries")
        if self.label_kind == "binary" and not np.all(np.isin(Y, (-1.0, 1.0))):
            raise DataFormatError("binary labels must be -1 or +1")
        if self.label_kind == "onehot":
            if Y.ndim != 2 or not np.allclose(Y.sum(axis=1), 1.0) or not np.all(np.isin(Y, (0.0, 1.0))):
                raise DataFormatError("onehot labels must be one-hot rows")
        seen: set = set()
        for name, idx in self.splits.items():
            s = set(np.asarray(idx).tolist())
            if seen & s:
                raise DataFormatError("pool splits overlap", split=name)
            seen |= s
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        if self.label_kind == "onehot":
            return self.Y.shape[1]
        return 2 if self.label_kind == "binary" else 1

    def example(self, i: int) -> Example:
        return Example(self.X[i], np.atleast_1d(self.Y[i]), int(i))

    def subset(self, idx: Iterable[int]) -> "Pool":
        idx = np.asarray(list(idx), dtype=np.int64)
        return Pool(self.X[idx], self.Y[idx], self.label_kind, self.seed)

    def split_pool(self, name: str) -> "Pool":
        if name not in self.splits:
            raise ConfigError(f"pool has no '{name}' split", available=sorted(self.splits))
        return self.subset(self.splits[name])

    def with_bias(self) -> "Pool":
        return Pool(augment(self.X), self.Y, self.label_kind, self.seed, dict(self.splits))

    def as_onehot(self) -> "Pool":
        """binary ±1 -> two-class one-hot with +1 -> (1, 0) and -1 -> (0, 1)."""
        if self.label_kind == "onehot":
            return self
        if self.label_kind != "binary":
            raise ConfigError("only binary pools convert to one-hot")
        Y = np.stack([(self.Y > 0).astype(float), (self.Y < 0).astype(float)], axis=1)
        return Pool(self.X, Y, "onehot", self.seed, dict(self.splits))

    def as_binary(self) -> "Pool":
        """Two-class one-hot -> ±1 with (1, 0) -> +1."""
        if self.label_kind == "binary":
            return self
        if self.label_kind != "onehot" or self.Y.shape[1] != 2:
            raise ConfigError("only two-class one-hot pools convert to ±1")
        return Pool(self.X, self.Y[:, 0] - self.Y[:, 1], "binary", self.seed, dict(self.splits))


def onehot_to_pm1(y) -> float:
    y = np.asarray(y, dtype=np.float64)
    return float(y[0] - y[1])


def pm1_to_onehot(y: float) -> FloatArray:
    return np.array([1.0, 0.0]) if y > 0 else np.array([0.0, 1.0])


# =====================================================
# SAMPLING / SPLITTING
# =====================================================

def sample_uniform(pool: Pool, rng: SeededRng) -> Example:
    """Uniform draw with replacement."""
    if len(pool) == 0:
        raise DataFormatError("cannot sample from an empty pool")
    return pool.example(int(rng.integers(len(pool))))


def split(pool: Pool, fractions: Sequence[float], rng: SeededRng) -> Tuple[Pool, Pool, Pool]:
    """Disjoint (train, val, test) partition of a shuffled pool."""
    if len(pool) == 0:
        raise DataFormatError("cannot split an empty pool")
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError("split fractions must be three non-negative numbers summing to 1",
                          fractions=list(fractions))
    n = len(pool)
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = min(int(round(fractions[1] * n)), n - n_train)
    parts = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
    return tuple(pool.subset(p) for p in parts)  # type: ignore[return-value]


def with_splits(pool: Pool, fractions: Sequence[float], rng: SeededRng) -> Pool:
    """Same pool with train/val/test index arrays attached."""
    n = len(pool)
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = min(int(round(fractions[1] * n)), n - n_train)
    splits = {
        "train": perm[:n_train],
        "val": perm[n_train:n_train + n_val],
        "test": perm[n_train + n_val:],
    }
    return Pool(pool.X, pool.Y, pool.label_kind, pool.seed, splits)


# =====================================================
# SYNTHETIC GENERATORS
# =====================================================

def gen_linreg(
    n: int = LINREG_N,
    d: int = LINREG_D,
    w_star=None,
    noise_sd: float = LINREG_NOISE,
    seed: int = 0,
    intercept: float = 0.0,
) -> Pool:
    """y = <w*, x> + intercept + noise_sd * N(0, 1), x ~ N(0, I)."""
    if n <= 0 or d <= 0 or noise_sd < 0:
        raise ConfigError("gen_linreg needs n > 0, d > 0, noise_sd >= 0", n=n, d=d, noise_sd=noise_sd)
    rng = SeededRng(seed)
    w = rng.normal(size=d) if w_star is None else np.asarray(w_star, dtype=np.float64)
    if w.shape != (d,):
        raise DimensionError("w* has the wrong dimension", got=w.shape, want=d)
    X = rng.normal(size=(n, d))
    y = X @ w + intercept + noise_sd * rng.normal(size=n)
    return Pool(X, y, "regression", seed)


def gen_gaussian_clusters(
    n_per_class: int = N_PER_CLASS,
    d: int = CLUSTER_D,
    offset: float = CLUSTER_OFFSET,
    seed: int = 0,
) -> Pool:
    """Class +1 ~ N(offset*1, I), class -1 ~ N(-offset*1, I), shuffled."""
    if n_per_class <= 0 or d <= 0:
        raise ConfigError("gen_gaussian_clusters needs positive sizes", n_per_class=n_per_class, d=d)
    rng = SeededRng(seed)
    pos = rng.normal(size=(n_per_class, d)) + offset
    neg = rng.normal(size=(n_per_class, d)) - offset
    X = np.vstack([pos, neg])
    y = np.concatenate([np.ones(n_per_class), -np.ones(n_per_class)])
    perm = rng.permutation(2 * n_per_class)
    return Pool(X[perm], y[perm], "binary", seed)


def gen_half_moon(n_per_class: int = N_PER_CLASS, noise_sd: float = MOON_NOISE, seed: int = 0) -> Pool:
    """Two interleaving half circles (see the geometry constants above), shuffled."""
    if n_per_class <= 0 or noise_sd < 0:
        raise ConfigError("gen_half_moon needs n_per_class > 0 and noise_sd >= 0")
    rng = SeededRng(seed)
    t = np.linspace(0.0, np.pi, n_per_class)
    upper = np.stack([np.cos(t), np.sin(t)], axis=1)
    lower = np.stack([MOON_SHIFT_X - np.cos(t), 1.0 - np.sin(t) - MOON_SHIFT_Y], axis=1)
    X = np.vstack([upper, lower]) + noise_sd * rng.normal(size=(2 * n_per_class, 2))
    y = np.concatenate([np.ones(n_per_class), -np.ones(n_per_class)])
    perm = rng.permutation(2 * n_per_class)
    return Pool(X[perm], y[perm], "binary", seed)


# =====================================================
# MNIST (IDX)
# =====================================================

def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx_images(path) -> np.ndarray:
    """uint8 images (n, rows, cols) from an IDX3 file (optionally gzipped)."""
    path = Path(path)
    try:
        with _open(path) as f:
            raw = f.read()
    except OSError as e:
        raise DataFormatError(f"cannot read IDX images: {e}", path=str(path)) from e
    if len(raw) < 16:
        raise DataFormatError("IDX image file too short", path=str(path))
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError("bad IDX image magic number", path=str(path), magic=hex(magic))
    if len(raw) - 16 != n * rows * cols:
        raise DataFormatError("IDX image payload length mismatch", path=str(path))
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    path = Path(path)
    try:
        with _open(path) as f:
            raw = f.read()
    except OSError as e:
        raise DataFormatError(f"cannot read IDX labels: {e}", path=str(path)) from e
    if len(raw) < 8:
        raise DataFormatError("IDX label file too short", path=str(path))
    magic, n = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError("bad IDX label magic number", path=str(path), magic=hex(magic))
    if len(raw) - 8 != n:
        raise DataFormatError("IDX label payload length mismatch", path=str(path))
    return np.frombuffer(raw, dtype=np.uint8, offset=8)


def projection_matrix(seed: int, proj_dim: int = MNIST_PROJ_DIM, n_pixels: int = MNIST_PIXELS) -> FloatArray:
    """Fixed Gaussian matrix with N(0, 1/n_pixels) entries."""
    return SeededRng(seed).normal(size=(n_pixels, proj_dim)) / np.sqrt(n_pixels)


def load_mnist_projected(
    idx_image_path,
    idx_label_path,
    digits: Sequence[int] = (3, 5),
    proj_dim: int = MNIST_PROJ_DIM,
    seed: int = 0,
    subset: Optional[int] = MNIST_SUBSET,
    identity: bool = False,
) -> Pool:
    """
    Pixels scaled to [0, 1], flattened and multiplied by the seed's projection
    matrix. Two digits give a binary pool (first digit listed -> +1); more give
    one-hot labels in the listed order. `identity=True` skips the projection.
    """
    digits = [int(d) for d in digits]
    if not digits or len(set(digits)) != len(digits):
        raise ConfigError("digits must be a non-empty set", digits=digits)

    images = read_idx_images(idx_image_path)
    labels = read_idx_labels(idx_label_path)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError("image and label counts differ",
                              images=images.shape[0], labels=labels.shape[0])

    keep = np.flatnonzero(np.isin(labels, digits))
    rng = SeededRng(seed)
    if subset is not None and subset < keep.size:
        keep = np.sort(rng.choice(keep.size, size=subset, replace=False))
        keep = np.flatnonzero(np.isin(labels, digits))[keep]
    pixels = images[keep].reshape(keep.size, -1).astype(np.float64) / 255.0

    if identity:
        if proj_dim != pixels.shape[1]:
            raise ConfigError("identity projection needs proj_dim equal to the pixel count",
                              proj_dim=proj_dim, pixels=pixels.shape[1])
        X = pixels
    else:
        X = pixels @ projection_matrix(seed, proj_dim, pixels.shape[1])

    lab = labels[keep]
    if len(digits) == 2:
        Y = np.where(lab == digits[0], 1.0, -1.0)
        kind = "binary"
    else:
        Y = np.zeros((keep.size, len(digits)))
        for k, dgt in enumerate(digits):
            Y[lab == dgt, k] = 1.0
        kind = "onehot"
    log("DATA", f"MNIST digits={digits} n={keep.size} dim={X.shape[1]}")
    return Pool(X, Y, kind, seed)


# =====================================================
# POOL FILES
# =====================================================

def save_pool(pool: Pool, path) -> Path:
    path = Path(path)
    header = {
        "format": POOL_FORMAT,
        "version": 1,
        "d": pool.d,
        "n": len(pool),
        "label_kind": pool.label_kind,
        "seed": pool.seed,
    }
    arrays = {"header": np.array(json.dumps(header)), "X": pool.X, "Y": pool.Y}
    for name, idx in pool.splits.items():
        arrays[f"split_{name}"] = np.asarray(idx, dtype=np.int64)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            np.savez(f, **arrays)
    except OSError as e:
        raise OSError(f"cannot write pool to {path}: {e}") from e
    return path


def load_pool(path) -> Pool:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            X, Y = z["X"], z["Y"]
            splits = {k[len("split_"):]: z[k] for k in z.files if k.startswith("split_")}
    except (OSError, KeyError, ValueError) as e:
        raise DataFormatError(f"cannot read pool file: {e}", path=str(path)) from e
    if header.get("format") != POOL_FORMAT:
        raise DataFormatError("not a labelteach pool file", path=str(path))
    if X.shape != (header["n"], header["d"]):
        raise DataFormatError("pool header does not match its arrays", path=str(path))
    return Pool(X, Y, header["label_kind"], int(header["seed"]), splits)
