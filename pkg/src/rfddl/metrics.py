"""Classification and reconstruction-quality metrics."""

from __future__ import annotations

import numpy as np

from .errors import InputError

SNR_CAP_DB = 300.0

__all__ = ["SNR_CAP_DB", "accuracy", "confusion_matrix", "snr_db", "rmse"]


def _label_pair(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise InputError(f"length mismatch: {pred.size} predictions vs {truth.size} labels")
    if pred.size == 0:
        raise InputError("need at least one label")
    return pred, truth


def accuracy(pred, truth) -> float:
    """Fraction of exact matches."""
    pred, truth = _label_pair(pred, truth)
    return float(np.mean(pred == truth))


def confusion_matrix(pred, truth, c: int) -> np.ndarray:
    """Counts ``C[i, j]`` of samples with true class ``i`` predicted as ``j``."""
    pred, truth = _label_pair(pred, truth)
    c = int(c)
    for name, v in (("prediction", pred), ("truth", truth)):
        if not np.all(v == np.round(v)) or v.min() < 0 or v.max() >= c:
            raise InputError(f"{name} labels must be integers in [0, {c - 1}]")
    C = np.zeros((c, c), dtype=np.int64)
    np.add.at(C, (truth.astype(np.int64), pred.astype(np.int64)), 1)
    return C


def _pair(reference, estimate):
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(estimate, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise InputError("empty matrices")
    return a, b


def snr_db(reference, estimate) -> float:
    """``10 log10(||ref||^2 / ||ref - est||^2)`` in dB, capped at ``SNR_CAP_DB``.

    Normalized by the reference, so ``snr_db(a, b) != snr_db(b, a)`` in general.
    """
    a, b = _pair(reference, estimate)
    signal = float((a * a).sum())
    resid = a - b
    noise = float((resid * resid).sum())
    if noise == 0.0 or (signal > 0 and noise <= signal * 10.0 ** (-SNR_CAP_DB / 10)):
        return SNR_CAP_DB
    if signal == 0.0:
        return -np.inf
    return min(10.0 * np.log10(signal / noise), SNR_CAP_DB)


def rmse(reference, estimate) -> float:
    """Entrywise root-mean-square difference."""
    a, b = _pair(reference, estimate)
    return float(np.linalg.norm(a - b) / np.sqrt(a.size))
