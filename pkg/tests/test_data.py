import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rfddl.data import (CenteringOperator, LabeledDataset, SyntheticSpec, build_indicator_codes,
                        build_label_matrix, centering_apply, inject_noise, make_rng, pca_reduce,
                        split_indices_per_class, split_per_class, synth_blobs)
from rfddl.errors import InputError

# six atoms over three classes (2, 2, 2) and nine samples (4, 2, 3)
ATOM_LABELS = np.array([0, 0, 1, 1, 2, 2])
SAMPLE_LABELS = np.array([0, 0, 0, 0, 1, 1, 2, 2, 2])
Q_REFERENCE = np.array([
    [1, 1, 1, 1, 0, 0, 0, 0, 0],
    [1, 1, 1, 1, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 1, 1, 0, 0, 0],
    [0, 0, 0, 0, 1, 1, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 1, 1, 1],
    [0, 0, 0, 0, 0, 0, 1, 1, 1],
], dtype=float)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_label_matrix_identity_case():
    np.testing.assert_array_equal(build_label_matrix([0, 1, 2], 3), np.eye(3))


def test_label_matrix_small_case():
    np.testing.assert_array_equal(build_label_matrix([0, 0, 1], 2), [[1, 1, 0], [0, 0, 1]])


def test_label_matrix_block_widths():
    H = build_label_matrix(SAMPLE_LABELS, 3)
    assert H.sum(axis=1).tolist() == [4, 2, 3]
    np.testing.assert_array_equal(H.sum(axis=0), np.ones(9))


def test_label_matrix_rejects_out_of_range():
    with pytest.raises(InputError):
        build_label_matrix([0, 3], 3)
    with pytest.raises(InputError):
        build_label_matrix([-1, 0], 3)


def test_indicator_codes_reference_layout():
    Q = build_indicator_codes(SAMPLE_LABELS, ATOM_LABELS)
    assert Q.shape == (6, 9)
    assert np.array_equal(Q, Q_REFERENCE)
    # the same layout written with one-based labels
    assert np.array_equal(build_indicator_codes(SAMPLE_LABELS + 1, ATOM_LABELS + 1), Q_REFERENCE)


def test_indicator_codes_single_class_is_all_ones():
    assert np.all(build_indicator_codes([2, 2, 2], [2, 2]) == 1)


def test_indicator_codes_permutation_pattern():
    perm = np.array([2, 0, 1])
    np.testing.assert_array_equal(build_indicator_codes(perm, [0, 1, 2]), np.eye(3)[:, perm])


def test_indicator_codes_empty_inputs():
    with pytest.raises(InputError):
        build_indicator_codes([], [0])
    with pytest.raises(InputError):
        build_indicator_codes([0], [])


@given(st.lists(st.integers(0, 3), min_size=1, max_size=12),
       st.lists(st.integers(0, 3), min_size=1, max_size=8),
       st.permutations(range(4)))
def test_indicator_codes_commute_with_label_relabelling(samples, atoms, perm):
    perm = np.asarray(perm)
    samples, atoms = np.asarray(samples), np.asarray(atoms)
    np.testing.assert_array_equal(build_indicator_codes(samples, atoms),
                                  build_indicator_codes(perm[samples], perm[atoms]))
    # reordering atoms and samples permutes rows and columns
    ri = np.argsort(atoms, kind="stable")
    ci = np.argsort(samples, kind="stable")
    np.testing.assert_array_equal(build_indicator_codes(samples[ci], atoms[ri]),
                                  build_indicator_codes(samples, atoms)[np.ix_(ri, ci)])


def test_centering_examples():
    np.testing.assert_array_equal(centering_apply(np.array([[1.0, 3.0]])), [[-1.0, 1.0]])
    assert np.all(centering_apply(np.full((3, 5), 7.0)) == 0)


def test_centering_dimension_mismatch():
    with pytest.raises(InputError):
        CenteringOperator(4).apply(np.ones((2, 3)))


@given(st.integers(1, 12))
def test_centering_matrix_projector(N):
    Hc = CenteringOperator(N).matrix()
    np.testing.assert_allclose(Hc, Hc.T, atol=1e-12)
    np.testing.assert_allclose(Hc @ Hc, Hc, atol=1e-12)
    np.testing.assert_allclose(Hc @ Hc.T, Hc, atol=1e-12)
    np.testing.assert_allclose(Hc @ np.ones(N), 0, atol=1e-12)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 8)), elements=finite))
def test_centering_apply_matches_matrix_and_is_idempotent(A):
    once = centering_apply(A)
    np.testing.assert_allclose(centering_apply(once), once, atol=1e-12 * (1 + np.abs(A).max()))
    np.testing.assert_allclose(once, A @ CenteringOperator(A.shape[1]).matrix(),
                               atol=1e-11 * (1 + np.abs(A).max()))
    np.testing.assert_allclose(once.sum(axis=1), 0, atol=1e-10 * (1 + np.abs(A).max()))


def test_inject_noise_zero_variance_is_identity(rng):
    X = rng.standard_normal((4, 6))
    assert np.array_equal(inject_noise(X, 0.0, 1), X)


def test_inject_noise_variance_500_statistics():
    Z = inject_noise(np.zeros((100, 100)), 500.0, 3)
    assert abs(Z.var() - 500) / 500 < 0.10


def test_inject_noise_determinism_and_seed_dependence(rng):
    X = rng.standard_normal((5, 5))
    assert np.array_equal(inject_noise(X, 2.0, 11), inject_noise(X, 2.0, 11))
    assert not np.array_equal(inject_noise(X, 2.0, 11), inject_noise(X, 2.0, 12))


def test_inject_noise_negative_variance():
    with pytest.raises(InputError):
        inject_noise(np.zeros((2, 2)), -1.0, 0)


def test_generator_is_pcg64_stream():
    # first draw of PCG64(0) standard normal, fixed across numpy releases
    g = make_rng(0)
    assert isinstance(g.bit_generator, np.random.PCG64)
    expected = np.random.Generator(np.random.PCG64(0)).standard_normal(3)
    np.testing.assert_array_equal(make_rng(0).standard_normal(3), expected)


def _blobs(**kw):
    base = dict(c=3, n=8, samples_per_class=10, seed=0)
    base.update(kw)
    return synth_blobs(SyntheticSpec(**base))


def test_dataset_validation():
    with pytest.raises(InputError):
        LabeledDataset(np.ones((2, 3)), [0, 1, 3], 3)
    with pytest.raises(InputError):
        LabeledDataset(np.ones((2, 3)), [0, 0, 0], 2)  # class 1 missing
    with pytest.raises(InputError):
        LabeledDataset(np.ones((2, 1)), [0], 1)
    with pytest.raises(InputError):
        LabeledDataset(np.array([[1.0, np.nan]]), [0, 0], 1)
    with pytest.raises(InputError):
        LabeledDataset(np.ones((2, 3)), [0, 1], 2)


def test_dataset_is_read_only():
    ds = _blobs()
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1.0


def test_split_counts_and_partition():
    ds = _blobs(samples_per_class=7)
    tr_idx, te_idx = split_indices_per_class(ds.labels, 3, 6, seed=4)
    assert np.bincount(ds.labels[tr_idx]).tolist() == [6, 6, 6]
    assert np.bincount(ds.labels[te_idx]).tolist() == [1, 1, 1]
    assert np.intersect1d(tr_idx, te_idx).size == 0
    assert np.array_equal(np.union1d(tr_idx, te_idx), np.arange(ds.n_samples))
    again = split_indices_per_class(ds.labels, 3, 6, seed=4)
    assert np.array_equal(again[0], tr_idx)


def test_split_class_too_small():
    ds = _blobs(samples_per_class=5)
    with pytest.raises(InputError):
        split_per_class(ds, 5, 0)


def test_blobs_balanced_and_separated():
    ds = _blobs(samples_per_class=12, centroid_separation=4.0)
    assert ds.class_counts().tolist() == [12, 12, 12]
    # centroids from a huge-sample run are within sampling error of the exact ones
    big = synth_blobs(SyntheticSpec(c=4, n=6, samples_per_class=4000,
                                    centroid_separation=3.0, seed=2))
    means = np.stack([big.X[:, big.labels == k].mean(axis=1) for k in range(4)], axis=1)
    d = np.linalg.norm(means[:, :, None] - means[:, None, :], axis=0)
    off = d[~np.eye(4, dtype=bool)]
    assert off.min() >= 3.0 - 0.15


def test_blobs_fewer_features_than_classes():
    ds = _blobs(c=4, n=2, centroid_separation=5.0)
    assert ds.X.shape == (2, 40)


def _nearest_centroid_accuracy(spec):
    train = synth_blobs(spec)
    # same seed, hence same centroids; the last 100 columns per class are held out
    test = synth_blobs(SyntheticSpec(**{**spec.__dict__,
                                        "samples_per_class": 100 + spec.samples_per_class}))
    cent = np.stack([train.X[:, train.labels == k].mean(axis=1) for k in range(spec.c)], axis=1)
    mask = np.zeros(test.n_samples, dtype=bool)
    for k in range(spec.c):
        mask[np.flatnonzero(test.labels == k)[-100:]] = True
    Xt, yt = test.X[:, mask], test.labels[mask]
    d = ((Xt[:, None, :] - cent[:, :, None]) ** 2).sum(axis=0)
    return np.mean(np.argmin(d, axis=0) == yt)


def test_blobs_nearest_centroid_oracle():
    far = SyntheticSpec(c=3, n=10, samples_per_class=30, centroid_separation=20.0, seed=5)
    assert _nearest_centroid_accuracy(far) == 1.0
    accs = [_nearest_centroid_accuracy(
        SyntheticSpec(c=3, n=10, samples_per_class=30, centroid_separation=0.0, seed=s))
        for s in range(5)]
    assert abs(np.mean(accs) - 1 / 3) <= 0.1


def test_spec_validation():
    with pytest.raises(InputError):
        SyntheticSpec(c=2, n=2, samples_per_class=2, centroid_separation=-1.0)
    with pytest.raises(InputError):
        SyntheticSpec(c=2, n=2, samples_per_class=2, within_class_std=0.0)


def test_pca_full_rank_reconstruction(rng):
    X = rng.standard_normal((6, 4)) @ rng.standard_normal((4, 20)) + 3.0
    Xc = X - X.mean(axis=1, keepdims=True)
    Xd, B = pca_reduce(X, 4)
    np.testing.assert_allclose(B.T @ B, np.eye(4), atol=1e-10)
    assert np.linalg.norm(B @ Xd - Xc) <= 1e-8 * np.linalg.norm(Xc)


def test_pca_variance_order(rng):
    X = rng.standard_normal((8, 50)) * np.arange(1, 9)[:, None]
    Xd, _ = pca_reduce(X, 5)
    v = Xd.var(axis=1)
    assert np.all(np.diff(v) <= 1e-12)


def test_pca_wide_and_tall_agree_with_gram_eigendecomposition(rng):
    X = rng.standard_normal((30, 6))
    Xd, B = pca_reduce(X, 3)
    Xc = X - X.mean(axis=1, keepdims=True)
    w, U = np.linalg.eigh(Xc @ Xc.T)
    top = U[:, ::-1][:, :3]
    # same subspace, independent of sign conventions
    np.testing.assert_allclose(np.abs(top.T @ B), np.eye(3), atol=1e-8)


def test_pca_dimension_range():
    with pytest.raises(InputError):
        pca_reduce(np.ones((3, 4)), 0)
    with pytest.raises(InputError):
        pca_reduce(np.ones((3, 4)), 4)
