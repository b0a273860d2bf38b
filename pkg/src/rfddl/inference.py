"""Test-time coding and classification.

Two coding schemes feed the trained classifier ``W``:

* reconstruction: ridge codes against the clean dictionary,
  ``(D^T D + I)^{-1} D^T x``;
* embedding: a linear code extractor ``G`` fitted once on the training
  matrix, codes ``G x``.

A ridge one-vs-all classifier on raw features is included as a reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data import LabeledDataset, build_label_matrix
from .errors import InputError, NumericalError
from .solver import RfddlModel

__all__ = [
    "CodeExtractor",
    "Prediction",
    "codes_by_reconstruction",
    "learn_code_extractor",
    "predict_from_codes",
    "classify_r",
    "classify_e",
    "baseline_ridge",
    "predict_ridge",
    "hard_labels",
]


@dataclass(frozen=True)
class CodeExtractor:
    G: np.ndarray  # (K, n)


@dataclass(frozen=True)
class Prediction:
    soft: np.ndarray  # (c, N_test)
    hard: np.ndarray  # (N_test,)


def hard_labels(soft: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(soft, axis=0).astype(np.int64)


def _as_test_matrix(model: RfddlModel, X_test) -> np.ndarray:
    X_test = np.asarray(X_test, dtype=np.float64)
    if X_test.ndim == 1:
        X_test = X_test[:, None]
    n = model.D_new.shape[0]
    if X_test.ndim != 2 or X_test.shape[0] != n:
        raise InputError(f"test matrix must have {n} rows (features), got shape {X_test.shape}")
    return X_test


def codes_by_reconstruction(model: RfddlModel, X_test) -> np.ndarray:
    """Ridge codes ``(D^T D + I)^{-1} D^T X_test``, one column per test sample."""
    X_test = _as_test_matrix(model, X_test)
    D = model.D_new
    A = D.T @ D + np.eye(D.shape[1])
    return scipy.linalg.solve(A, D.T @ X_test, assume_a="pos")


def learn_code_extractor(model: RfddlModel, X_train) -> CodeExtractor:
    """Fit ``G`` minimizing ``||L G X - S||^2 + ||G X||^2`` (ridge on ``X X^T``).

    ``G = (L^T L + I)^{-1} L^T S X^T (X X^T + eps I)^{-1}`` with
    ``eps = jitter * trace(X X^T) / n``. When there are fewer samples than
    features the equivalent ``(X^T X + eps I)^{-1} X^T`` form is used.
    """
    X = _as_test_matrix(model, X_train)
    n, N = X.shape
    if model.S.shape[1] != N:
        raise InputError(
            f"training matrix has {N} samples but the model codes have {model.S.shape[1]}"
        )
    L, S = model.L, model.S
    K = L.shape[0]
    left = scipy.linalg.solve(L.T @ L + np.eye(K), L.T @ S, assume_a="pos")  # (K, N)
    sq = float((X * X).sum())
    eps = model.hyperparams.jitter * sq / n
    if eps <= 0:
        eps = model.hyperparams.jitter
    if N < n:
        G = left @ scipy.linalg.solve(X.T @ X + eps * np.eye(N), X.T, assume_a="pos")
    else:
        G = scipy.linalg.solve(X @ X.T + eps * np.eye(n), (left @ X.T).T, assume_a="pos").T
    if not np.all(np.isfinite(G)):
        raise NumericalError("code extractor contains non-finite values")
    return CodeExtractor(G=G)


def predict_from_codes(model: RfddlModel, codes) -> Prediction:
    codes = np.asarray(codes, dtype=np.float64)
    if codes.ndim != 2 or codes.shape[0] != model.W.shape[1]:
        raise InputError(f"codes must have {model.W.shape[1]} rows, got shape {codes.shape}")
    soft = model.W @ codes
    return Prediction(soft=soft, hard=hard_labels(soft))


def classify_r(model: RfddlModel, X_test) -> Prediction:
    return predict_from_codes(model, codes_by_reconstruction(model, X_test))


def classify_e(model: RfddlModel, extractor: CodeExtractor, X_test,
               apply_laplacian: bool = False) -> Prediction:
    """Embedding scheme: soft labels ``W G x``, or ``W L G x`` with ``apply_laplacian``."""
    X_test = _as_test_matrix(model, X_test)
    codes = extractor.G @ X_test
    if apply_laplacian:
        codes = model.L @ codes
    return predict_from_codes(model, codes)


def baseline_ridge(train: LabeledDataset, eps: float = 1e-3) -> np.ndarray:
    """One-vs-all ridge classifier ``H X^T (X X^T + eps I)^{-1}`` of shape (c, n)."""
    if not eps > 0:
        raise InputError("eps must be positive")
    X = np.asarray(train.X)
    n, N = X.shape
    H = build_label_matrix(train.labels, train.c)
    if N < n:
        return scipy.linalg.solve(X.T @ X + eps * np.eye(N), H.T, assume_a="pos").T @ X.T
    return scipy.linalg.solve(X @ X.T + eps * np.eye(n), X @ H.T, assume_a="pos").T


def predict_ridge(W_b: np.ndarray, X_test) -> Prediction:
    soft = W_b @ np.asarray(X_test, dtype=np.float64)
    return Prediction(soft=soft, hard=hard_labels(soft))
