"""Experiment runners: denoising reports and one-axis parameter sweeps.

Every sweep cell is an independent job. Repeat ``r`` of cell ``i`` draws its
split, noise and training seeds from ``SeedSequence([master, i, r])``, so a
cell reproduces in isolation and the report does not depend on the order in
which workers finish.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset, inject_noise, split_per_class
from .errors import InputError, NumericalError
from .inference import (baseline_ridge, classify_e, classify_r, learn_code_extractor,
                        predict_ridge)
from .metrics import accuracy, confusion_matrix, rmse, snr_db
from .solver import Hyperparams, fit, to_model

AXES = ("variance", "dictionary_size", "train_per_class", "alpha", "beta", "gamma")
METHODS = ("rfddl_r", "rfddl_e", "ridge")
RIDGE_EPS = 1e-3

__all__ = [
    "AXES",
    "METHODS",
    "DenoiseReport",
    "RepeatResult",
    "CellResult",
    "ExperimentReport",
    "denoise_report",
    "evaluate_methods",
    "sweep",
]


@dataclass(frozen=True)
class DenoiseReport:
    variance: float
    seed: int
    snr_noisy: float
    snr_recovered: float
    rmse_noisy: float
    rmse_recovered: float
    error_energy: np.ndarray  # per-column L2 norm of the learned data error
    iterations: int
    final_objective: float
    seconds: float

    @property
    def improved(self) -> bool:
        return self.snr_recovered > self.snr_noisy and self.rmse_recovered < self.rmse_noisy

    def to_dict(self) -> dict:
        return {
            "variance": float(self.variance),
            "seed": int(self.seed),
            "snr_noisy_db": self.snr_noisy,
            "snr_recovered_db": self.snr_recovered,
            "rmse_noisy": self.rmse_noisy,
            "rmse_recovered": self.rmse_recovered,
            "improved": self.improved,
            "error_energy": [float(v) for v in self.error_energy],
            "iterations": int(self.iterations),
            "final_objective": float(self.final_objective),
            "seconds": float(self.seconds),
        }


def denoise_report(dataset: LabeledDataset, hp: Hyperparams, variance: float,
                   seed) -> DenoiseReport:
    """Corrupt ``dataset`` with Gaussian noise, train, and score ``X' - E`` against ``X``."""
    t0 = time.perf_counter()
    clean = np.asarray(dataset.X)
    noisy = inject_noise(clean, variance, seed)
    state = fit(LabeledDataset(noisy, dataset.labels, dataset.c), hp)
    recovered = noisy - state.E
    return DenoiseReport(
        variance=float(variance),
        seed=int(seed),
        snr_noisy=snr_db(clean, noisy),
        snr_recovered=snr_db(clean, recovered),
        rmse_noisy=rmse(clean, noisy),
        rmse_recovered=rmse(clean, recovered),
        error_energy=np.sqrt((state.E * state.E).sum(axis=0)),
        iterations=state.iter,
        final_objective=float(state.obj_history[-1]) if state.obj_history else float("nan"),
        seconds=time.perf_counter() - t0,
    )


@dataclass
class RepeatResult:
    repeat: int
    seed: int
    accuracy: dict
    confusion: dict
    seconds: float


@dataclass
class CellResult:
    index: int
    value: float
    repeats: list = field(default_factory=list)
    skipped: str | None = None

    @property
    def mean_accuracy(self) -> dict:
        if self.skipped or not self.repeats:
            return {}
        methods = self.repeats[0].accuracy.keys()
        return {m: float(np.mean([r.accuracy[m] for r in self.repeats])) for m in methods}

    @property
    def seconds(self) -> float:
        return float(sum(r.seconds for r in self.repeats))


@dataclass
class ExperimentReport:
    axis: str
    methods: tuple
    cells: list

    def mean_accuracy(self, method: str) -> np.ndarray:
        """Per-cell mean accuracy; NaN for skipped cells."""
        return np.array([c.mean_accuracy.get(method, np.nan) for c in self.cells])

    def values(self) -> np.ndarray:
        return np.array([c.value for c in self.cells], dtype=np.float64)

    def header(self) -> list:
        return [self.axis] + [f"{m}_accuracy" for m in self.methods] + ["seconds", "skipped"]

    def rows(self) -> list:
        out = []
        for c in self.cells:
            acc = c.mean_accuracy
            out.append([c.value] + [acc.get(m, "") for m in self.methods]
                       + [c.seconds, c.skipped or ""])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for row in self.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "methods": list(self.methods),
            "cells": [
                {
                    "index": c.index,
                    "value": c.value,
                    "skipped": c.skipped,
                    "mean_accuracy": c.mean_accuracy,
                    "seconds": c.seconds,
                    "repeats": [
                        {
                            "repeat": r.repeat,
                            "seed": r.seed,
                            "accuracy": r.accuracy,
                            "confusion": {m: v.tolist() for m, v in r.confusion.items()},
                            "seconds": r.seconds,
                        }
                        for r in c.repeats
                    ],
                }
                for c in self.cells
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate_methods(train_ds: LabeledDataset, test_ds: LabeledDataset, hp: Hyperparams,
                     methods=METHODS, apply_laplacian: bool = False):
    """Train once and score each requested method; returns ``(accuracy, confusion)`` dicts."""
    acc, conf = {}, {}
    need_model = any(m != "ridge" for m in methods)
    model = to_model(fit(train_ds, hp), hp) if need_model else None
    for m in methods:
        if m == "rfddl_r":
            pred = classify_r(model, test_ds.X)
        elif m == "rfddl_e":
            ext = learn_code_extractor(model, train_ds.X)
            pred = classify_e(model, ext, test_ds.X, apply_laplacian=apply_laplacian)
        elif m == "ridge":
            pred = predict_ridge(baseline_ridge(train_ds, RIDGE_EPS), test_ds.X)
        else:
            raise InputError(f"unknown method {m!r}")
        acc[m] = accuracy(pred.hard, test_ds.labels)
        conf[m] = confusion_matrix(pred.hard, test_ds.labels, test_ds.c)
    return acc, conf


def _cell_settings(axis, value, hp_base, c, train_per_class, variance):
    """Resolve (hyperparams, train_per_class, variance) for one grid value."""
    hp, m, var = hp_base, train_per_class, variance
    if axis == "variance":
        var = float(value)
        if var < 0:
            raise InputError(f"variance must be >= 0, got {value}")
    elif axis == "dictionary_size":
        K = int(value)
        if K != value or K < c or K % c:
            raise InputError(f"dictionary size {value} is not a positive multiple of c={c}")
        hp = hp.replace(atoms_per_class=K // c)
    elif axis == "train_per_class":
        m = int(value)
        if m != value:
            raise InputError(f"train_per_class must be an integer, got {value}")
    else:
        hp = hp.replace(**{axis: float(value)})
    if hp.atoms_per_class > m:
        raise InputError(
            f"{hp.atoms_per_class} atoms per class need at least that many training samples "
            f"per class, got {m}"
        )
    return hp, m, var


def _run_repeat(job):
    dataset, hp_base, axis, value, methods, seq, repeat, train_per_class, variance, lap = job
    hp, m, var = _cell_settings(axis, value, hp_base, dataset.c, train_per_class, variance)
    split_seed, noise_seed, train_seed = (int(s) for s in seq.generate_state(3))
    t0 = time.perf_counter()
    X = inject_noise(np.asarray(dataset.X), var, noise_seed)
    ds = LabeledDataset(X, dataset.labels, dataset.c)
    tr, te = split_per_class(ds, m, split_seed)
    acc, conf = evaluate_methods(tr, te, hp.replace(seed=train_seed), methods, lap)
    return RepeatResult(repeat=repeat, seed=train_seed, accuracy=acc, confusion=conf,
                        seconds=time.perf_counter() - t0)


def _safe_repeat(job):
    try:
        return _run_repeat(job)
    except (InputError, NumericalError) as exc:
        return f"{type(exc).__name__}: {exc}"


def sweep(dataset: LabeledDataset, hp_base: Hyperparams, axis: str, values, methods=METHODS,
          repeats: int = 1, seed: int = 0, train_per_class: int = 30, variance: float = 0.0,
          apply_laplacian: bool = False, workers: int | None = None) -> ExperimentReport:
    """Vary one setting over ``values`` and report per-method accuracy.

    Each repeat draws a fresh noise realization, per-class split and training
    seed. Cells that cannot run (for example more atoms per class than
    training samples) are recorded as skipped with the reason. ``workers``
    greater than one runs repeats in a process pool.
    """
    if axis not in AXES:
        raise InputError(f"axis must be one of {AXES}, got {axis!r}")
    values = list(values)
    if not values:
        raise InputError("sweep needs at least one grid value")
    methods = tuple(methods)
    if not methods or any(m not in METHODS for m in methods):
        raise InputError(f"methods must be a non-empty subset of {METHODS}")
    if int(repeats) < 1:
        raise InputError("repeats must be >= 1")

    cells = [CellResult(index=i, value=float(v)) for i, v in enumerate(values)]
    jobs = []
    for cell in cells:
        try:
            _cell_settings(axis, cell.value, hp_base, dataset.c, train_per_class, variance)
        except InputError as exc:
            cell.skipped = str(exc)
            continue
        for r in range(int(repeats)):
            seq = np.random.SeedSequence([int(seed), cell.index, r])
            jobs.append((cell.index, r, (dataset, hp_base, axis, cell.value, methods, seq, r,
                                         train_per_class, variance, apply_laplacian)))

    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            results = list(pool.map(_safe_repeat, [j for _, _, j in jobs]))
    else:
        results = [_safe_repeat(j) for _, _, j in jobs]

    for (i, r, _), res in sorted(zip(jobs, results), key=lambda t: (t[0][0], t[0][1])):
        cell = cells[i]
        if isinstance(res, str):
            if cell.skipped is None:
                cell.skipped = f"repeat {r}: {res}"
        else:
            cell.repeats.append(res)
    for cell in cells:
        if cell.skipped:
            cell.repeats = []
    return ExperimentReport(axis=axis, methods=methods, cells=cells)
