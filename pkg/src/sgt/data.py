"""Datasets: representation, file formats, preprocessing and synthetic data.

Features are stored column-major, one sample per column (``d x n``), which is
the layout the sparse-coding and graph code consume directly.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "DatasetError",
    "FeatureDataset",
    "NoiseSpec",
    "load_dataset",
    "save_dataset",
    "normalize_columns",
    "inject_salt_pepper",
    "make_blobs",
    "make_subspace_classes",
]

BINARY_MAGIC = b"SGTD"
BINARY_VERSION = 1
UNLABELED = -1


class DatasetError(ValueError):
    """Malformed dataset file or invalid dataset contents."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """Samples, their class ids and which of them count as labeled.

    Parameters
    ----------
    features : ndarray, shape (d, n)
        One sample per column.
    labels : ndarray of int, shape (n,)
        Dense class ids in ``[0, class_count)``; ``-1`` marks a sample whose
        true class is unknown (such a sample can never be labeled).
    labeled_mask : ndarray of bool, shape (n,)
        Samples whose labels the classifier may see.
    class_count : int
    feature_range : (float, float)
        Valid per-entry value range; salt-and-pepper noise uses its endpoints.
    class_names : tuple
        Original label value for each dense class id, as read from a file.
    """

    features: np.ndarray
    labels: np.ndarray
    labeled_mask: np.ndarray
    class_count: int
    feature_range: tuple[float, float]
    class_names: tuple = field(default=())

    def __post_init__(self):
        X = _frozen(self.features, np.float64)
        if X.ndim != 2:
            raise DatasetError(f"features must be a d x n matrix, got shape {X.shape}")
        d, n = X.shape
        if d < 1 or n < 2:
            raise DatasetError(f"need d >= 1 and n >= 2, got d={d}, n={n}")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features contain non-finite values")
        labels = _frozen(self.labels, np.int64)
        mask = _frozen(self.labeled_mask, bool)
        if labels.shape != (n,) or mask.shape != (n,):
            raise DatasetError("labels and labeled_mask must have one entry per sample")
        c = int(self.class_count)
        if c < 2:
            raise DatasetError(f"class_count must be >= 2, got {c}")
        if np.any(labels >= c) or np.any(labels < UNLABELED):
            raise DatasetError(f"class ids must lie in [0, {c})")
        if np.any(labels[mask] < 0):
            raise DatasetError("a labeled sample has no class id")
        lo, hi = (float(v) for v in self.feature_range)
        if not lo <= hi:
            raise DatasetError(f"feature_range {self.feature_range} is not ordered")
        names = tuple(self.class_names) or tuple(range(c))
        if len(names) != c:
            raise DatasetError("class_names must have class_count entries")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "labeled_mask", mask)
        object.__setattr__(self, "class_count", c)
        object.__setattr__(self, "feature_range", (lo, hi))
        object.__setattr__(self, "class_names", names)

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    @property
    def n_samples(self) -> int:
        return self.features.shape[1]

    def with_mask(self, labeled_mask) -> "FeatureDataset":
        return replace(self, labeled_mask=labeled_mask)

    def with_features(self, features) -> "FeatureDataset":
        return replace(self, features=features)


@dataclass(frozen=True)
class NoiseSpec:
    """Salt-and-pepper corruption: ``proportion`` of each sample's entries.

    ``low``/``high`` default to the dataset's feature range endpoints.
    """

    proportion: float
    seed: int = 0
    low: float | None = None
    high: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.proportion <= 1.0:
            raise ValueError(f"noise proportion must lie in [0, 1], got {self.proportion}")
        if self.seed < 0:
            raise ValueError("noise seed must be non-negative")
        if self.low is not None and self.high is not None and self.low > self.high:
            raise ValueError(f"noise low={self.low} exceeds high={self.high}")


# ---------------------------------------------------------------------------
# file formats


def _dense_labels(raw):
    """Map raw labels (``None`` = unlabeled) to dense ids, sorted by value."""
    names = sorted({v for v in raw if v is not None})
    index = {v: i for i, v in enumerate(names)}
    labels = np.array([UNLABELED if v is None else index[v] for v in raw], dtype=np.int64)
    return labels, tuple(names)


def _build(features, raw_labels, path):
    labels, names = _dense_labels(raw_labels)
    if len(names) < 2:
        raise DatasetError(f"{path}: need at least two distinct classes, found {len(names)}")
    return FeatureDataset(
        features=features,
        labels=labels,
        labeled_mask=labels >= 0,
        class_count=len(names),
        feature_range=(float(features.min()), float(features.max())),
        class_names=names,
    )


def _is_header(row):
    try:
        for cell in row:
            if cell.strip():
                float(cell)
    except ValueError:
        return True
    return False


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [(reader.line_num, r) for r in reader if any(cell.strip() for cell in r)]
    if rows and _is_header(rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise DatasetError(f"{path}: empty dataset file")
    width = len(rows[0][1])
    if width < 2:
        raise DatasetError(f"{path}: row {rows[0][0]} has no feature columns")
    raw_labels, values = [], []
    for lineno, row in rows:
        if len(row) != width:
            raise DatasetError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
        cell = row[0].strip()
        if cell == "":
            raw_labels.append(None)
        else:
            try:
                raw_labels.append(int(cell))
            except ValueError:
                raise DatasetError(f"{path}: row {lineno}: label {cell!r} is not an integer") from None
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise DatasetError(f"{path}: row {lineno}: {exc}") from None
    return _build(np.array(values, dtype=np.float64).T, raw_labels, path)


def _read_binary(path):
    blob = Path(path).read_bytes()
    if len(blob) == 0:
        raise DatasetError(f"{path}: empty dataset file")
    if len(blob) < 16 or blob[:4] != BINARY_MAGIC:
        raise DatasetError(f"{path}: missing SGTD header")
    version, d, n = struct.unpack_from("<III", blob, 4)
    if version != BINARY_VERSION:
        raise DatasetError(f"{path}: unsupported version {version}")
    expected = 16 + 4 * n + 8 * d * n
    if len(blob) != expected:
        raise DatasetError(f"{path}: expected {expected} bytes for d={d}, n={n}, got {len(blob)}")
    labels = np.frombuffer(blob, dtype="<i4", count=n, offset=16)
    values = np.frombuffer(blob, dtype="<f8", count=d * n, offset=16 + 4 * n)
    features = values.reshape((d, n), order="F").astype(np.float64)
    raw = [None if v < 0 else int(v) for v in labels]
    return _build(features, raw, path)


def load_dataset(path, format: str = "csv") -> FeatureDataset:
    """Read a dataset file.

    CSV: optional header, first column an integer label (blank = unlabeled),
    remaining columns features, one sample per row.  Binary: ``SGTD`` magic,
    u32 version, u32 d, u32 n, n i32 labels (negative = unlabeled), then
    ``d*n`` little-endian f64 in column-major order.

    File labels are remapped to dense ids ``0..c-1`` in sorted order; the
    original values are kept in ``class_names``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    if format == "csv":
        return _read_csv(path)
    if format == "binary":
        return _read_binary(path)
    raise ValueError(f"unknown dataset format {format!r}")


def _file_labels(ds):
    return [ds.class_names[y] if y >= 0 else None for y in ds.labels]


def save_dataset(ds: FeatureDataset, path, format: str = "csv") -> None:
    """Write ``ds`` in one of the formats read by :func:`load_dataset`.

    True labels are written for every sample that has one, regardless of the
    labeled mask.
    """
    raw = _file_labels(ds)
    if format == "csv":
        d = ds.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label"] + [f"f{j}" for j in range(d)])
            for i in range(ds.n_samples):
                lab = "" if raw[i] is None else str(raw[i])
                w.writerow([lab] + [repr(float(v)) for v in ds.features[:, i]])
    elif format == "binary":
        ints = np.array([-1 if v is None else v for v in raw], dtype="<i4")
        d, n = ds.features.shape
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC)
            fh.write(struct.pack("<III", BINARY_VERSION, d, n))
            fh.write(ints.tobytes())
            fh.write(np.asarray(ds.features, dtype="<f8").tobytes(order="F"))
    else:
        raise ValueError(f"unknown dataset format {format!r}")


# ---------------------------------------------------------------------------
# preprocessing


def normalize_columns(ds: FeatureDataset) -> FeatureDataset:
    """Scale every nonzero sample to unit Euclidean norm; zero columns stay zero."""
    X = np.array(ds.features)
    # divide by the largest entry first so tiny columns don't underflow when squared
    peak = np.abs(X).max(axis=0)
    unit = X / np.where(peak > 0, peak, 1.0)
    rel = np.linalg.norm(unit, axis=0)
    # columns already unit up to rounding are left alone, which makes this idempotent
    scale = (peak > 0) & (np.abs(peak * rel - 1.0) > 8 * np.finfo(float).eps)
    X[:, scale] = unit[:, scale] / rel[scale]
    return replace(ds, features=X, feature_range=(float(X.min()), float(X.max())))


def inject_salt_pepper(ds: FeatureDataset, spec: NoiseSpec) -> FeatureDataset:
    """Corrupt ``round(proportion * d)`` entries of every sample.

    The corrupted entries of each sample are drawn uniformly without
    replacement and set to ``low`` or ``high`` with probability 1/2.  For a
    fixed seed, the corrupted set at a smaller proportion is a subset of the set
    at a larger one, so sweeps over the noise level only add corruption.
    """
    X = np.array(ds.features)
    d, n = X.shape
    k = int(round(spec.proportion * d))
    if k == 0:
        return replace(ds, features=X)
    low = ds.feature_range[0] if spec.low is None else float(spec.low)
    high = ds.feature_range[1] if spec.high is None else float(spec.high)
    if low > high:
        raise ValueError(f"noise low={low} exceeds high={high}")
    rng = np.random.default_rng(spec.seed)
    for i in range(n):
        order = rng.permutation(d)
        salt = rng.random(d) < 0.5
        idx = order[:k]
        X[idx, i] = np.where(salt[:k], high, low)
    lo, hi = ds.feature_range
    return replace(ds, features=X, feature_range=(min(lo, low), max(hi, high)))


# ---------------------------------------------------------------------------
# synthetic data


def _blob_centers(class_count, dim, separation, rng):
    if class_count <= dim:
        # scaled orthonormal directions: pairwise distance exactly `separation`
        basis = np.linalg.qr(rng.standard_normal((dim, dim)))[0][:, :class_count]
        return basis * (separation / np.sqrt(2.0))
    radius = separation * class_count
    centers = []
    while len(centers) < class_count:
        v = rng.standard_normal(dim)
        v *= radius / np.linalg.norm(v)
        if all(np.linalg.norm(v - u) >= separation for u in centers):
            centers.append(v)
    return np.array(centers).T


def make_blobs(
    class_count: int,
    per_class: int,
    dim: int,
    separation: float,
    sigma: float,
    seed: int = 0,
) -> FeatureDataset:
    """Isotropic Gaussian clusters, one per class, all samples labeled.

    Centers are pairwise at least ``separation`` apart.  When
    ``class_count <= dim`` they sit along random orthogonal directions, so the
    clusters stay apart after :func:`normalize_columns` too.
    """
    if class_count < 1 or per_class < 1 or dim < 1:
        raise ValueError("class_count, per_class and dim must all be >= 1")
    if not (separation > 0 and sigma >= 0):
        raise ValueError("separation must be > 0 and sigma >= 0")
    rng = np.random.default_rng(seed)
    centers = _blob_centers(class_count, dim, separation, rng)
    labels = np.repeat(np.arange(class_count), per_class)
    X = centers[:, labels] + sigma * rng.standard_normal((dim, labels.size))
    return FeatureDataset(
        features=X,
        labels=labels,
        labeled_mask=np.ones(labels.size, dtype=bool),
        class_count=max(class_count, 2),  # a dataset always declares >= 2 classes
        feature_range=(float(X.min()), float(X.max())),
    )


def make_subspace_classes(
    class_count: int,
    per_class: int,
    dim: int,
    rank: int = 3,
    between: float = 0.05,
    within: float = 0.3,
    seed: int = 0,
) -> FeatureDataset:
    """Image-like data in ``[0, 1]``: a shared mean, small class offsets, low-rank class variation.

    Every class is ``mean + offset_k + U_k a`` with a class-specific
    ``rank``-dimensional basis ``U_k``.  With ``within`` larger than
    ``between`` the classes overlap in Euclidean distance but remain separable
    by subspace, which is the regime sparse coding is designed for.
    """
    if class_count < 2 or per_class < 1 or dim < 1 or rank < 1:
        raise ValueError("need class_count >= 2 and per_class, dim, rank >= 1")
    rng = np.random.default_rng(seed)
    mean = 0.3 + 0.4 * rng.random(dim)
    cols = []
    for _ in range(class_count):
        offset = between * rng.standard_normal(dim)
        basis = np.linalg.qr(rng.standard_normal((dim, rank)))[0] * (within / np.sqrt(rank))
        cols.append(np.clip((mean + offset)[:, None] + basis @ rng.standard_normal((rank, per_class)), 0.0, 1.0))
    labels = np.repeat(np.arange(class_count), per_class)
    return FeatureDataset(
        features=np.hstack(cols),
        labels=labels,
        labeled_mask=np.ones(labels.size, dtype=bool),
        class_count=class_count,
        feature_range=(0.0, 1.0),
    )
