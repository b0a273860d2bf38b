"""Matrix, label, dataset and model files.

Matrix binary layout (all little-endian)::

    b"RFDM" | u32 version | u64 rows | u64 cols | rows*cols float64, row-major

Model container::

    b"RFDL" | u32 version | u64 header length | UTF-8 JSON header | array payload

The JSON header is written with sorted keys and lists every array's name,
dtype, shape and byte offset into the payload, so saving the same model twice
gives identical bytes. Every writer goes through :func:`atomic_write`.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .data import LabeledDataset
from .errors import FormatError, InputError
from .solver import Hyperparams, RfddlModel

MATRIX_MAGIC = b"RFDM"
MATRIX_VERSION = 1
MODEL_MAGIC = b"RFDL"
MODEL_VERSION = 1
ORIENTATIONS = ("samples_as_columns", "samples_as_rows")

_MATRIX_HEADER = struct.Struct("<4sIQQ")
_MODEL_PREFIX = struct.Struct("<4sIQ")
_MODEL_ARRAYS = (("D_new", "<f8"), ("S", "<f8"), ("L", "<f8"), ("W", "<f8"),
                 ("atom_labels", "<i8"))

__all__ = [
    "ORIENTATIONS",
    "atomic_write",
    "resolve_format",
    "matrix_to_bytes",
    "matrix_from_bytes",
    "save_matrix",
    "load_matrix",
    "save_labels",
    "load_labels",
    "save_dataset",
    "load_dataset",
    "model_to_bytes",
    "model_from_bytes",
    "save_model",
    "load_model",
]


def atomic_write(path, data) -> Path:
    """Write ``data`` (bytes or str) to a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def resolve_format(path, fmt: str = "auto") -> str:
    if fmt == "auto":
        return "csv" if str(path).lower().endswith((".csv", ".txt")) else "binary"
    if fmt not in ("csv", "binary"):
        raise InputError(f"matrix format must be csv, binary or auto, got {fmt!r}")
    return fmt


def _check_orientation(orientation: str) -> None:
    if orientation not in ORIENTATIONS:
        raise InputError(f"orientation must be one of {ORIENTATIONS}, got {orientation!r}")


# -- matrices ---------------------------------------------------------------

def matrix_to_bytes(M: np.ndarray) -> bytes:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {M.shape}")
    rows, cols = M.shape
    head = _MATRIX_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, rows, cols)
    return head + np.ascontiguousarray(M, dtype="<f8").tobytes()


def matrix_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < _MATRIX_HEADER.size:
        raise FormatError(f"truncated header: {len(buf)} bytes, need {_MATRIX_HEADER.size} "
                          f"(offset {len(buf)})")
    magic, version, rows, cols = _MATRIX_HEADER.unpack_from(buf, 0)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MATRIX_MAGIC!r}")
    if version != MATRIX_VERSION:
        raise FormatError(f"unsupported matrix version {version} at offset 4")
    need = rows * cols * 8
    have = len(buf) - _MATRIX_HEADER.size
    if have != need:
        kind = "truncated" if have < need else "trailing bytes in"
        raise FormatError(f"{kind} payload: expected {need} bytes after offset "
                          f"{_MATRIX_HEADER.size}, found {have}")
    data = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=_MATRIX_HEADER.size)
    return data.reshape(rows, cols).astype(np.float64)


def _matrix_to_csv(M: np.ndarray) -> str:
    # repr gives the shortest string that parses back to the same double
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in M)


def _matrix_from_csv(text: str) -> np.ndarray:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise FormatError("empty matrix file")
    rows, width = [], None
    for no, line in enumerate(lines, start=1):
        if not line.strip():
            raise FormatError(f"line {no}: blank line inside matrix")
        tokens = line.split(",")
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise FormatError(f"line {no}: ragged row with {len(tokens)} values, expected {width}")
        try:
            rows.append([float(t) for t in tokens])
        except ValueError:
            bad = next(t for t in tokens if not _is_float(t))
            raise FormatError(f"line {no}: non-numeric token {bad.strip()!r}") from None
    return np.array(rows, dtype=np.float64)


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def save_matrix(path, M: np.ndarray, fmt: str = "auto",
                orientation: str = "samples_as_columns") -> Path:
    """Write a columns-as-samples matrix, transposing for ``samples_as_rows``."""
    _check_orientation(orientation)
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {M.shape}")
    if orientation == "samples_as_rows":
        M = M.T
    if resolve_format(path, fmt) == "csv":
        return atomic_write(path, _matrix_to_csv(M))
    return atomic_write(path, matrix_to_bytes(M))


def load_matrix(path, fmt: str = "auto", orientation: str = "samples_as_columns") -> np.ndarray:
    """Read a matrix and return it with samples as columns."""
    _check_orientation(orientation)
    path = Path(path)
    if resolve_format(path, fmt) == "csv":
        M = _matrix_from_csv(path.read_text(encoding="utf-8"))
    else:
        M = matrix_from_bytes(path.read_bytes())
    if orientation == "samples_as_rows":
        M = M.T
    return np.ascontiguousarray(M)


# -- labels and datasets ----------------------------------------------------

def save_labels(path, labels) -> Path:
    labels = np.asarray(labels)
    return atomic_write(path, "".join(f"{int(v)}\n" for v in labels))


def load_labels(path) -> np.ndarray:
    """One zero-based integer label per line."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise InputError(f"label file {path} is empty")
    out = []
    for no, line in enumerate(lines, start=1):
        try:
            v = int(line.strip())
        except ValueError:
            raise FormatError(f"line {no}: expected an integer label, got {line.strip()!r}") from None
        if v < 0:
            raise InputError(f"line {no}: negative label {v}")
        out.append(v)
    return np.array(out, dtype=np.int64)


def save_dataset(directory, ds: LabeledDataset, fmt: str = "csv") -> Path:
    """Write ``X`` (samples as columns), ``labels.txt`` and ``dataset.json`` to ``directory``."""
    directory = Path(directory)
    fmt = resolve_format("x.csv" if fmt == "csv" else "x", fmt)
    x_name = "X.csv" if fmt == "csv" else "X.rfdm"
    save_matrix(directory / x_name, ds.X, fmt)
    save_labels(directory / "labels.txt", ds.labels)
    meta = {"c": int(ds.c), "n_features": ds.n_features, "n_samples": ds.n_samples,
            "matrix": x_name, "format": fmt, "orientation": "samples_as_columns"}
    atomic_write(directory / "dataset.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return directory


def load_dataset(directory) -> LabeledDataset:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "dataset.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"dataset.json: {exc}") from None
    X = load_matrix(directory / meta["matrix"], meta.get("format", "auto"),
                    meta.get("orientation", "samples_as_columns"))
    labels = load_labels(directory / "labels.txt")
    return LabeledDataset(X, labels, int(meta["c"]))


# -- models -----------------------------------------------------------------

def model_to_bytes(model: RfddlModel) -> bytes:
    blobs, entries, offset = [], [], 0
    for name, dtype in _MODEL_ARRAYS:
        a = np.ascontiguousarray(getattr(model, name), dtype=dtype)
        raw = a.tobytes()
        entries.append({"name": name, "dtype": dtype, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {"format": "rfddl-model", "version": MODEL_VERSION, "arrays": entries,
              "hyperparams": model.hyperparams.to_dict()}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _MODEL_PREFIX.pack(MODEL_MAGIC, MODEL_VERSION, len(hbytes)) + hbytes + b"".join(blobs)


def model_from_bytes(buf: bytes) -> RfddlModel:
    if len(buf) < _MODEL_PREFIX.size:
        raise FormatError(f"truncated model header at offset {len(buf)}")
    magic, version, hlen = _MODEL_PREFIX.unpack_from(buf, 0)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MODEL_MAGIC!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version} at offset 4")
    start = _MODEL_PREFIX.size
    if len(buf) < start + hlen:
        raise FormatError(f"truncated model header: need {hlen} bytes at offset {start}")
    try:
        header = json.loads(buf[start:start + hlen].decode("utf-8"))
        entries = {e["name"]: e for e in header["arrays"]}
        hp = Hyperparams.from_dict(header["hyperparams"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed model header at offset {start}: {exc}") from None
    base = start + hlen
    arrays = {}
    for name, dtype in _MODEL_ARRAYS:
        if name not in entries:
            raise FormatError(f"model is missing array {name!r}")
        e = entries[name]
        shape = tuple(int(s) for s in e["shape"])
        count = int(np.prod(shape))
        lo = base + int(e["offset"])
        if e["dtype"] != dtype or int(e["nbytes"]) != count * 8:
            raise FormatError(f"array {name!r}: inconsistent dtype or size in header")
        if lo + count * 8 > len(buf):
            raise FormatError(f"array {name!r}: payload truncated at offset {len(buf)}")
        arrays[name] = np.frombuffer(buf, dtype=dtype, count=count, offset=lo).reshape(shape).copy()
    arrays["D_new"] = arrays["D_new"].astype(np.float64)
    return RfddlModel(D_new=arrays["D_new"], S=arrays["S"].astype(np.float64),
                      L=arrays["L"].astype(np.float64), W=arrays["W"].astype(np.float64),
                      atom_labels=arrays["atom_labels"].astype(np.int64), hyperparams=hp)


def save_model(path, model: RfddlModel) -> Path:
    return atomic_write(path, model_to_bytes(model))


def load_model(path) -> RfddlModel:
    return model_from_bytes(Path(path).read_bytes())
