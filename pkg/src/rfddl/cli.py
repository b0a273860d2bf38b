"""Command-line interface: ``rfddl {train,predict,eval,sweep,denoise,synth}``.

Options can also come from a flat ``key=value`` file passed with ``--config``
(``#`` starts a comment, keys are flag names with or without dashes). Flags
given on the command line win over the file. Failures print one JSON object
on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import AXES, METHODS, denoise_report, sweep
from .data import LabeledDataset, SyntheticSpec, synth_blobs
from .errors import FormatError, InputError, NumericalError, RfddlError
from .fileio import (atomic_write, load_dataset, load_labels, load_matrix, load_model,
                     save_dataset, save_model)
from .inference import classify_e, classify_r, learn_code_extractor
from .metrics import accuracy, confusion_matrix
from .solver import Hyperparams, converged, fit, to_model

EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4
EXIT_INTERNAL = 1

_HP_FLAGS = {
    "alpha": "alpha",
    "beta": "beta",
    "gamma": "gamma",
    "atoms_per_class": "atoms_per_class",
    "knn": "k_neighbors",
    "tol": "tol",
    "max_iter": "max_iter",
    "jitter": "jitter",
    "irls_floor": "irls_floor",
    "init": "init",
    "seed": "seed",
}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class CliError(InputError):
    """Bad command-line usage."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value option file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--alpha", type=float, default=1e2)
    p.add_argument("--beta", type=float, default=1e4)
    p.add_argument("--gamma", type=float, default=1e8)
    p.add_argument("--atoms-per-class", type=int, default=5)
    p.add_argument("--knn", type=int, default=7)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--jitter", type=float, default=1e-8)
    p.add_argument("--irls-floor", type=float, default=1e-8)
    p.add_argument("--init", choices=("samples", "random"), default="samples")


def _data_flags(p) -> None:
    p.add_argument("--dataset", type=Path, help="dataset directory written by `synth`")
    p.add_argument("--data", type=Path, help="sample matrix file")
    p.add_argument("--labels", type=Path, help="label file, one integer per line")
    p.add_argument("--classes", type=int, help="class count (default: max label + 1)")
    _matrix_flags(p)


def _matrix_flags(p) -> None:
    if any(a.dest == "format" for a in p._actions):
        return
    p.add_argument("--format", choices=("auto", "csv", "binary"), default="auto")
    p.add_argument("--orientation", choices=("samples_as_columns", "samples_as_rows"),
                   default="samples_as_columns")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rfddl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rfddl {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("train", help="fit a model")
    _shared(p)
    _data_flags(p)

    p = sub.add_parser("predict", help="classify a test matrix")
    _shared(p)
    p.add_argument("--model", type=Path, help="model file written by `train`")
    p.add_argument("--data", type=Path, help="test matrix")
    p.add_argument("--scheme", choices=("r", "e"), default="r")
    p.add_argument("--apply-laplacian", action="store_true")
    p.add_argument("--train-data", type=Path, help="training matrix (needed for scheme e)")
    _matrix_flags(p)

    p = sub.add_parser("eval", help="classify and score a labelled test set")
    _shared(p)
    p.add_argument("--model", type=Path, help="model file written by `train`")
    _data_flags(p)
    p.add_argument("--scheme", choices=("r", "e"), default="r")
    p.add_argument("--apply-laplacian", action="store_true")
    p.add_argument("--train-data", type=Path, help="training matrix (needed for scheme e)")

    p = sub.add_parser("sweep", help="vary one setting and report accuracy")
    _shared(p)
    _data_flags(p)
    p.add_argument("--axis", choices=AXES, default="variance")
    p.add_argument("--values", type=str, help="comma-separated grid values")
    p.add_argument("--methods", type=str, default=",".join(METHODS))
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--train-per-class", type=int, default=30)
    p.add_argument("--variance", type=float, default=0.0)
    p.add_argument("--apply-laplacian", action="store_true")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("denoise", help="report SNR/RMSE before and after error removal")
    _shared(p)
    _data_flags(p)
    p.add_argument("--variance", type=float, default=500.0)

    p = sub.add_parser("synth", help="write a synthetic blob dataset")
    _shared(p)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--features", type=int, default=32)
    p.add_argument("--samples-per-class", type=int, default=130)
    p.add_argument("--separation", type=float, default=10.0)
    p.add_argument("--std", type=float, default=1.0)
    p.add_argument("--format", choices=("csv", "binary"), default="csv")
    return parser


def read_config(path) -> dict:
    """Parse a ``key=value`` file into ``{dest_name: string}``."""
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path} line {no}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(f"{path} line {no}: empty key")
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _apply_config(sub: argparse.ArgumentParser, cfg: dict) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        if key in ("config", "help") or key not in actions:
            raise CliError(f"unknown config key {key!r}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            low = value.lower()
            if low not in _TRUE | _FALSE:
                raise CliError(f"config key {key!r} expects a boolean, got {value!r}")
            defaults[key] = low in _TRUE
        else:
            if act.choices is not None and value not in act.choices:
                raise CliError(f"config key {key!r}: {value!r} not in {list(act.choices)}")
            try:
                defaults[key] = act.type(value) if act.type else value
            except (TypeError, ValueError):
                raise CliError(f"config key {key!r}: cannot parse {value!r}") from None
    sub.set_defaults(**defaults)


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(sub, cfg)
        args = parser.parse_args(argv)
    return args


def hyperparams_from_args(args) -> Hyperparams:
    return Hyperparams(**{field: getattr(args, flag) for flag, field in _HP_FLAGS.items()})


def _load_labelled(args) -> LabeledDataset:
    if args.dataset is not None:
        if args.data is not None or args.labels is not None:
            raise CliError("use either --dataset or --data/--labels, not both")
        return load_dataset(args.dataset)
    if args.data is None or args.labels is None:
        raise CliError("a labelled dataset is required: --dataset DIR or --data and --labels")
    X = load_matrix(args.data, args.format, args.orientation)
    labels = load_labels(args.labels)
    c = args.classes if args.classes is not None else int(labels.max()) + 1
    return LabeledDataset(X, labels, c)


def _load_features(args, path) -> np.ndarray:
    return load_matrix(path, args.format, args.orientation)


def _write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def cmd_train(args) -> dict:
    ds = _load_labelled(args)
    hp = hyperparams_from_args(args)
    t0 = time.perf_counter()
    state = fit(ds, hp)
    seconds = time.perf_counter() - t0
    model = to_model(state, hp)
    out = args.out
    save_model(out / "model.rfdl", model)
    hist = state.obj_history
    atomic_write(out / "history.csv",
                 _csv_text(["iteration", "objective"],
                           [[i + 1, float(v)] for i, v in enumerate(hist)]))
    summary = {
        "iterations": len(hist),
        "final_objective": float(hist[-1]),
        "last_delta": float(abs(hist[-1] - hist[-2])) if len(hist) > 1 else None,
        "converged": converged(hist, hp.tol),
        "seconds": seconds,
        "n_features": ds.n_features,
        "n_samples": ds.n_samples,
        "classes": ds.c,
        "atoms": model.n_atoms,
        "hyperparams": hp.to_dict(),
    }
    _write_json(out / "summary.json", summary)
    return summary


def _predict(args, model, X):
    if args.scheme == "r":
        return classify_r(model, X)
    if args.train_data is None:
        raise CliError("scheme e needs --train-data, the matrix the model was trained on")
    ext = learn_code_extractor(model, _load_features(args, args.train_data))
    return classify_e(model, ext, X, apply_laplacian=args.apply_laplacian)


def _prediction_rows(pred):
    return [[i, int(h)] + [float(v) for v in pred.soft[:, i]] for i, h in enumerate(pred.hard)]


def _prediction_header(c):
    return ["index", "label"] + [f"score_{k}" for k in range(c)]


def _require_model(args):
    if args.model is None:
        raise CliError("--model is required")
    return load_model(args.model)


def cmd_predict(args) -> dict:
    if args.data is None:
        raise CliError("--data (test matrix) is required")
    model = _require_model(args)
    pred = _predict(args, model, _load_features(args, args.data))
    path = atomic_write(args.out / "predictions.csv",
                        _csv_text(_prediction_header(model.n_classes), _prediction_rows(pred)))
    return {"predictions": str(path), "samples": int(pred.hard.size)}


def cmd_eval(args) -> dict:
    model = _require_model(args)
    ds = _load_labelled(args)
    pred = _predict(args, model, ds.X)
    C = confusion_matrix(pred.hard, ds.labels, max(ds.c, model.n_classes))
    metrics = {"accuracy": accuracy(pred.hard, ds.labels), "samples": int(ds.n_samples),
               "scheme": args.scheme, "apply_laplacian": bool(args.apply_laplacian)}
    atomic_write(args.out / "predictions.csv",
                 _csv_text(_prediction_header(model.n_classes), _prediction_rows(pred)))
    atomic_write(args.out / "confusion.csv",
                 _csv_text([f"pred_{k}" for k in range(C.shape[1])], C.tolist()))
    _write_json(args.out / "metrics.json", metrics)
    return metrics


def _parse_values(text):
    if not text:
        raise CliError("--values is required (comma-separated grid)")
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"--values must be comma-separated numbers, got {text!r}") from None


def cmd_sweep(args) -> dict:
    ds = _load_labelled(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    report = sweep(ds, hyperparams_from_args(args), args.axis, _parse_values(args.values),
                   methods=methods, repeats=args.repeats, seed=args.seed,
                   train_per_class=args.train_per_class, variance=args.variance,
                   apply_laplacian=args.apply_laplacian, workers=args.workers)
    atomic_write(args.out / "sweep.csv", report.to_csv())
    atomic_write(args.out / "sweep.json", report.to_json() + "\n")
    return {"cells": len(report.cells),
            "skipped": sum(1 for c in report.cells if c.skipped)}


def cmd_denoise(args) -> dict:
    ds = _load_labelled(args)
    rep = denoise_report(ds, hyperparams_from_args(args), args.variance, args.seed)
    d = rep.to_dict()
    _write_json(args.out / "denoise.json", d)
    return {k: d[k] for k in ("snr_noisy_db", "snr_recovered_db", "rmse_noisy",
                              "rmse_recovered", "improved")}


def cmd_synth(args) -> dict:
    spec = SyntheticSpec(c=args.classes, n=args.features,
                         samples_per_class=args.samples_per_class,
                         centroid_separation=args.separation, within_class_std=args.std,
                         seed=args.seed)
    ds = synth_blobs(spec)
    save_dataset(args.out, ds, args.format)
    return {"dataset": str(args.out), "n_features": ds.n_features, "n_samples": ds.n_samples}


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "denoise": cmd_denoise,
    "synth": cmd_synth,
}


def _fail(exc: BaseException, code: int) -> int:
    err = {"error": type(exc).__name__, "message": str(exc).replace("\n", " ")}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        result = COMMANDS[args.command](args)
    except NumericalError as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except (RfddlError, ValueError) as exc:
        return _fail(exc, EXIT_INPUT)
    except OSError as exc:
        return _fail(exc, EXIT_IO)
    except Exception as exc:  # noqa: BLE001 - last-resort single-line report
        return _fail(exc, EXIT_INTERNAL)
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
