"""Datasets, label encodings, centering, synthetic blobs, noise and PCA.

Samples are stored as columns throughout: ``X`` has shape
``(n_features, n_samples)``. All random routines draw from
``numpy.random.Generator(PCG64(seed))`` so a seed reproduces the same numbers
on every platform numpy supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = [
    "LabeledDataset",
    "CenteringOperator",
    "SyntheticSpec",
    "make_rng",
    "build_label_matrix",
    "build_indicator_codes",
    "centering_apply",
    "inject_noise",
    "split_indices_per_class",
    "split_per_class",
    "synth_blobs",
    "pca_reduce",
]


def make_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator for an integer seed or a ``SeedSequence``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class LabeledDataset:
    """Sample matrix (columns are samples) with integer labels in ``0..c-1``."""

    X: np.ndarray
    labels: np.ndarray
    c: int

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        labels = np.asarray(self.labels)
        if X.ndim != 2:
            raise InputError(f"X must be 2-D, got shape {X.shape}")
        n, N = X.shape
        if n < 1 or N < 2:
            raise InputError(f"need n >= 1 features and N >= 2 samples, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InputError("X contains non-finite entries")
        if labels.ndim != 1 or labels.shape[0] != N:
            raise InputError(f"labels must be a vector of length {N}")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise InputError("labels must be integers")
        labels = labels.astype(np.int64)
        c = int(self.c)
        if c < 1:
            raise InputError("class count must be positive")
        if labels.min() < 0 or labels.max() >= c:
            raise InputError(f"labels must lie in [0, {c - 1}]")
        missing = np.setdiff1d(np.arange(c), labels)
        if missing.size:
            raise InputError(f"classes without samples: {missing.tolist()}")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "c", c)

    @property
    def n_features(self) -> int:
        return self.X.shape[0]

    @property
    def n_samples(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.c)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.X[:, idx], self.labels[idx], self.c)


def _check_labels(labels, c: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise InputError("labels must be a non-empty vector")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise InputError("labels must be integers")
        labels = labels.astype(np.int64)
    if labels.min() < 0 or labels.max() >= c:
        raise InputError(f"label out of range for {c} classes")
    return labels


def build_label_matrix(labels, c: int) -> np.ndarray:
    """One-hot label matrix ``H`` of shape ``(c, N)``."""
    labels = _check_labels(labels, int(c))
    H = np.zeros((int(c), labels.size))
    H[labels, np.arange(labels.size)] = 1.0
    return H


def build_indicator_codes(sample_labels, atom_labels) -> np.ndarray:
    """Indicator codes ``Q`` with ``Q[k, i] = 1`` iff atom k and sample i share a label."""
    sample_labels = np.asarray(sample_labels)
    atom_labels = np.asarray(atom_labels)
    if sample_labels.size == 0 or atom_labels.size == 0:
        raise InputError("sample and atom label vectors must be non-empty")
    return (atom_labels.reshape(-1, 1) == sample_labels.reshape(1, -1)).astype(np.float64)


@dataclass(frozen=True)
class CenteringOperator:
    """The N x N centering projector ``I - ee^T/N``.

    Only :meth:`matrix` builds the dense form; :meth:`apply` subtracts row
    means, which is the same product without the O(N^2) memory.
    """

    N: int

    def __post_init__(self):
        if int(self.N) < 1:
            raise InputError("centering dimension must be positive")

    def matrix(self) -> np.ndarray:
        N = int(self.N)
        return np.eye(N) - np.full((N, N), 1.0 / N)

    def apply(self, A: np.ndarray) -> np.ndarray:
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[1] != self.N:
            raise InputError(f"expected {self.N} columns, got shape {A.shape}")
        return A - A.mean(axis=1, keepdims=True)


def centering_apply(A: np.ndarray, N: int | None = None) -> np.ndarray:
    """Right-multiply ``A`` by the centering matrix (row-mean removal)."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {A.shape}")
    return CenteringOperator(A.shape[1] if N is None else N).apply(A)


def inject_noise(X: np.ndarray, variance: float, seed) -> np.ndarray:
    """Return ``X + sqrt(variance) * Z`` with ``Z`` standard normal from ``seed``."""
    if variance < 0:
        raise InputError(f"noise variance must be >= 0, got {variance}")
    X = np.asarray(X, dtype=np.float64)
    if variance == 0:
        return X.copy()
    Z = make_rng(seed).standard_normal(X.shape)
    return X + np.sqrt(variance) * Z


def split_indices_per_class(labels, c: int, m_per_class: int, seed):
    """Random per-class split; returns sorted ``(train_idx, test_idx)``."""
    labels = np.asarray(labels)
    m = int(m_per_class)
    if m < 1:
        raise InputError("m_per_class must be >= 1")
    rng = make_rng(seed)
    train = []
    for k in range(c):
        members = np.flatnonzero(labels == k)
        if members.size <= m:
            raise InputError(
                f"class {k} has {members.size} samples; need more than {m} to split"
            )
        train.append(rng.permutation(members)[:m])
    train_idx = np.sort(np.concatenate(train))
    test_idx = np.setdiff1d(np.arange(labels.size), train_idx)
    return train_idx, test_idx


def split_per_class(ds: LabeledDataset, m_per_class: int, seed):
    """Split into ``m_per_class`` training samples per class and the rest."""
    train_idx, test_idx = split_indices_per_class(ds.labels, ds.c, m_per_class, seed)
    return ds.subset(train_idx), ds.subset(test_idx)


@dataclass(frozen=True)
class SyntheticSpec:
    c: int
    n: int
    samples_per_class: int
    centroid_separation: float = 10.0
    within_class_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.c < 1 or self.n < 1 or self.samples_per_class < 1:
            raise InputError("c, n and samples_per_class must be positive")
        if self.c * self.samples_per_class < 2:
            raise InputError("a dataset needs at least two samples")
        if self.centroid_separation < 0:
            raise InputError("centroid_separation must be >= 0")
        if not self.within_class_std > 0:
            raise InputError("within_class_std must be > 0")


def _centroids(c: int, n: int, separation: float, rng) -> np.ndarray:
    if n >= c:
        # orthonormal directions scaled so every pair sits exactly `separation` apart
        basis, _ = np.linalg.qr(rng.standard_normal((n, c)))
        return basis * (separation / np.sqrt(2.0))
    direction = rng.standard_normal(n)
    direction /= np.linalg.norm(direction)
    return np.outer(direction, np.arange(c) * separation)


def synth_blobs(spec: SyntheticSpec) -> LabeledDataset:
    """Balanced Gaussian clusters, one per class, in class-block column order."""
    rng = make_rng(spec.seed)
    centers = _centroids(spec.c, spec.n, float(spec.centroid_separation), rng)
    labels = np.repeat(np.arange(spec.c), spec.samples_per_class)
    noise = rng.standard_normal((spec.n, labels.size)) * spec.within_class_std
    return LabeledDataset(centers[:, labels] + noise, labels, spec.c)


def pca_reduce(X: np.ndarray, d: int):
    """Project mean-centered ``X`` onto its top ``d`` principal directions.

    Returns
    -------
    X_d : ndarray, shape (d, N)
        Scores, rows ordered by decreasing captured variance.
    basis : ndarray, shape (n, d)
        Orthonormal principal directions.
    """
    X = np.asarray(X, dtype=np.float64)
    n, N = X.shape
    if not 1 <= d <= min(n, N):
        raise InputError(f"target dimension must be in [1, {min(n, N)}], got {d}")
    Xc = X - X.mean(axis=1, keepdims=True)
    U, s, _ = np.linalg.svd(Xc, full_matrices=False)
    basis = U[:, :d]
    return basis.T @ Xc, basis
