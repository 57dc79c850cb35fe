"""Deterministic file I/O for the command line front end.

All emitters pin their byte output: floats are always written with 17
significant digits (enough to round-trip IEEE doubles exactly), JSON
keys are sorted, and every line ends with LF.  Identical inputs must
give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np
import scipy.io

__all__ = [
    "dump_json",
    "format_float",
    "load_json",
    "read_matrix_market",
    "sha256_file",
    "write_csv",
    "write_matrix_market",
]


def format_float(x):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    return f"{x:.17g}"


def _emit(obj, indent):
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [
            f"{inner}{json.dumps(str(key))}: {_emit(value, indent + 1)}"
            for key, value in sorted(obj.items())
        ]
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = list(np.asarray(obj).tolist()) if isinstance(obj, np.ndarray) else list(obj)
        if not items:
            return "[]"
        parts = [f"{inner}{_emit(value, indent + 1)}" for value in items]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_emit(obj, 0))
        fh.write("\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path, header, columns):
    columns = [np.atleast_1d(np.asarray(col)) for col in columns]
    if len(header) != len(columns):
        raise ValueError("header and column counts differ")
    length = columns[0].size
    if any(col.size != length for col in columns):
        raise ValueError("columns differ in length")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(length):
            fh.write(",".join(format_float(col[i]) for col in columns) + "\n")


def write_matrix_market(path, a):
    """Dense array-format Matrix Market with pinned formatting, so the
    same matrix always produces the same bytes and values survive a
    read-back bit-exactly."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{a.shape[0]} {a.shape[1]}\n")
        for j in range(a.shape[1]):
            for i in range(a.shape[0]):
                fh.write(format_float(a[i, j]) + "\n")


def read_matrix_market(path):
    return np.asarray(scipy.io.mmread(path), dtype=float)


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()
