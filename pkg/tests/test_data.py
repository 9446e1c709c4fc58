import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sgt.data import (
    BINARY_MAGIC,
    DatasetError,
    FeatureDataset,
    NoiseSpec,
    inject_salt_pepper,
    load_dataset,
    make_blobs,
    make_subspace_classes,
    normalize_columns,
    save_dataset,
)


def _ds(X, labels=None):
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    labels = np.arange(n) % 2 if labels is None else np.asarray(labels)
    return FeatureDataset(X, labels, labels >= 0, 2, (float(X.min()), float(X.max())))


def _write_binary(path, d, n, labels, values):
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC + struct.pack("<III", 1, d, n))
        fh.write(np.asarray(labels, dtype="<i4").tobytes())
        fh.write(np.asarray(values, dtype="<f8").tobytes())


# ---------------------------------------------------------------------------
# loading


def test_csv_with_header(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("label,f0,f1\n0,1.0,0.0\n1,0.0,1.0\n")
    ds = load_dataset(p)
    assert (ds.dim, ds.n_samples, ds.class_count) == (2, 2, 2)
    np.testing.assert_array_equal(ds.features, [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(ds.labels, [0, 1])
    assert ds.labeled_mask.all()


def test_csv_without_header_and_blank_label(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("5,1,2\n9,3,4\n,5,6\n")
    ds = load_dataset(p)
    np.testing.assert_array_equal(ds.labels, [0, 1, -1])
    np.testing.assert_array_equal(ds.labeled_mask, [True, True, False])
    assert ds.class_names == (5, 9)


def test_csv_ragged_row_reports_row_two(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("0,1.0\n1,2.0,3.0\n")
    with pytest.raises(DatasetError, match="row 2"):
        load_dataset(p)


@pytest.mark.parametrize("body, msg", [
    ("", "empty"),
    ("0,1.0\nx,2.0\n1,3.0\n", "label"),
    ("0.5,1.0\n1,2.0\n", "label"),
    ("0,1.0\n0,2.0\n", "two distinct classes"),
    ("0,1.0\n1,abc\n", "row 2"),
])
def test_csv_errors(tmp_path, body, msg):
    p = tmp_path / "a.csv"
    p.write_text(body)
    with pytest.raises(DatasetError, match=msg):
        load_dataset(p)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_dataset(tmp_path / "nope.csv")


def test_binary_layout(tmp_path):
    p = tmp_path / "a.bin"
    values = np.arange(40, dtype=float)
    _write_binary(p, 4, 10, np.arange(10) % 2, values)
    ds = load_dataset(p, "binary")
    assert ds.features.shape == (4, 10)
    # column-major: sample i is values[4i:4i+4]
    np.testing.assert_array_equal(ds.features[:, 3], [12, 13, 14, 15])


def test_binary_truncated(tmp_path):
    p = tmp_path / "a.bin"
    _write_binary(p, 4, 10, np.arange(10) % 2, np.zeros(39))
    with pytest.raises(DatasetError):
        load_dataset(p, "binary")


def test_binary_bad_magic(tmp_path):
    p = tmp_path / "a.bin"
    p.write_bytes(b"XXXX" + b"\0" * 32)
    with pytest.raises(DatasetError):
        load_dataset(p, "binary")


@pytest.mark.parametrize("fmt", ["csv", "binary"])
def test_round_trip(tmp_path, fmt):
    ds = make_blobs(3, 4, 5, 6.0, 1.0, seed=2)
    ds = ds.with_mask(np.arange(12) % 3 != 0)
    p = tmp_path / f"a.{fmt}"
    save_dataset(ds, p, fmt)
    back = load_dataset(p, fmt)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    # files keep true labels, so every sample comes back labeled
    assert back.labeled_mask.all()


def test_binary_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    labels = np.array([3, -1, 7, 3, 7])
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    _write_binary(p1, 3, 5, labels, rng.standard_normal(15))
    save_dataset(load_dataset(p1, "binary"), p2, "binary")
    assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# dataset type


def test_dataset_rejects_labeled_unknown():
    with pytest.raises(DatasetError):
        FeatureDataset(np.eye(2), np.array([0, -1]), np.array([True, True]), 2, (0.0, 1.0))


def test_dataset_arrays_are_read_only():
    ds = _ds(np.eye(2))
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0


# ---------------------------------------------------------------------------
# normalization


def test_normalize_examples():
    ds = normalize_columns(_ds([[3.0, 0.0, 1.0], [4.0, 0.0, 0.0]], [0, 1, 0]))
    np.testing.assert_allclose(ds.features[:, 0], [0.6, 0.8])
    np.testing.assert_array_equal(ds.features[:, 1], [0.0, 0.0])
    np.testing.assert_array_equal(ds.features[:, 2], [1.0, 0.0])


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 6)), elements=finite))
def test_normalize_idempotent_and_finite(X):
    ds = _ds(X)
    once = normalize_columns(ds)
    twice = normalize_columns(once)
    assert np.all(np.isfinite(once.features))
    np.testing.assert_array_equal(once.features, twice.features)
    norms = np.linalg.norm(once.features, axis=0)
    nz = np.linalg.norm(X, axis=0) > 0
    np.testing.assert_allclose(norms[nz], 1.0, rtol=1e-12)
    np.testing.assert_array_equal(once.labels, ds.labels)


# ---------------------------------------------------------------------------
# noise


def test_noise_zero_is_identity():
    ds = make_blobs(2, 5, 8, 5.0, 1.0)
    np.testing.assert_array_equal(inject_salt_pepper(ds, NoiseSpec(0.0, 3)).features, ds.features)


def test_noise_full_hits_every_entry():
    ds = make_blobs(2, 5, 8, 5.0, 1.0)
    out = inject_salt_pepper(ds, NoiseSpec(1.0, 3, low=-1.0, high=2.0)).features
    assert np.all(np.isin(out, [-1.0, 2.0]))


def test_noise_defaults_to_feature_range():
    ds = make_blobs(2, 5, 8, 5.0, 1.0)
    out = inject_salt_pepper(ds, NoiseSpec(1.0, 3)).features
    assert np.all(np.isin(out, ds.feature_range))


@settings(max_examples=100, deadline=None)
@given(
    st.integers(1, 30), st.integers(2, 8),
    st.floats(0, 1), st.integers(0, 2**31 - 1),
)
def test_noise_changes_exact_count(d, n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.1, 0.9, size=(d, n))
    ds = FeatureDataset(X, np.arange(n) % 2, np.ones(n, bool), 2, (0.0, 1.0))
    out = inject_salt_pepper(ds, NoiseSpec(p, seed)).features
    changed = (out != X).sum(axis=0)
    np.testing.assert_array_equal(changed, int(round(p * d)))


def test_noise_deterministic_and_nested():
    ds = make_subspace_classes(2, 5, 50, seed=1)
    a = inject_salt_pepper(ds, NoiseSpec(0.2, 9)).features
    b = inject_salt_pepper(ds, NoiseSpec(0.2, 9)).features
    c = inject_salt_pepper(ds, NoiseSpec(0.4, 9)).features
    np.testing.assert_array_equal(a, b)
    hit_a = a != ds.features
    # entries corrupted at 0.2 are corrupted identically at 0.4
    np.testing.assert_array_equal(c[hit_a], a[hit_a])


@pytest.mark.parametrize("kw", [dict(proportion=-0.1), dict(proportion=1.5), dict(proportion=0.1, seed=-1),
                                dict(proportion=0.1, low=2.0, high=1.0)])
def test_noise_spec_validation(kw):
    with pytest.raises(ValueError):
        NoiseSpec(**kw)


# ---------------------------------------------------------------------------
# synthetic data


def test_blobs_shape():
    ds = make_blobs(2, 5, 3, 10.0, 0.1, 7)
    assert ds.features.shape == (3, 10)
    np.testing.assert_array_equal(ds.labels, [0] * 5 + [1] * 5)


def test_blobs_zero_sigma_collapse_to_centers():
    ds = make_blobs(3, 4, 5, 10.0, 0.0, 1)
    for k in range(3):
        cols = ds.features[:, ds.labels == k]
        np.testing.assert_array_equal(cols, np.repeat(cols[:, :1], 4, axis=1))


def test_blobs_deterministic_and_separated():
    a, b = make_blobs(4, 3, 6, 8.0, 1.0, 5), make_blobs(4, 3, 6, 8.0, 1.0, 5)
    np.testing.assert_array_equal(a.features, b.features)
    centers = make_blobs(5, 1, 3, 8.0, 0.0, 2).features  # more classes than dims
    gaps = [np.linalg.norm(centers[:, i] - centers[:, j]) for i in range(5) for j in range(i)]
    assert min(gaps) >= 8.0 - 1e-9


def test_subspace_classes_in_unit_box():
    ds = make_subspace_classes(3, 4, 20, seed=0)
    assert ds.features.shape == (20, 12)
    assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0
