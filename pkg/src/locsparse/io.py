"""Matrix files and atomic writes.

Binary layout (little endian): magic ``b"LSPM"``, version ``u16``, rows
``u32``, cols ``u32``, then ``rows * cols`` float64 values in row-major order.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .model import ContractError, _values

MAGIC = b"LSPM"
VERSION = 1
_HEADER = struct.Struct("<4sHII")


class FormatError(ContractError):
    pass


def atomic_write(path, data: bytes | str):
    """Write ``data`` to ``path`` through a temporary file and a rename."""
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


def encode_matrix(X) -> bytes:
    X = np.asarray(_values(X), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise FormatError("only 2-D matrices can be stored")
    rows, cols = X.shape
    body = np.ascontiguousarray(X, dtype="<f8").tobytes()
    return _HEADER.pack(MAGIC, VERSION, rows, cols) + body


def decode_matrix(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise FormatError("file too short for an LSPM header")
    magic, version, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported LSPM version {version}")
    expected = _HEADER.size + 8 * rows * cols
    if len(blob) != expected:
        raise FormatError(f"expected {expected} bytes, found {len(blob)}")
    return np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(float)


def write_matrix(path, X):
    atomic_write(path, encode_matrix(X))


def read_matrix(path) -> np.ndarray:
    return decode_matrix(Path(path).read_bytes())


def write_csv(path, X):
    X = np.asarray(_values(X), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in X:
        writer.writerow([repr(float(x)) for x in row])
    atomic_write(path, buf.getvalue())


def read_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    if not rows:
        raise FormatError("empty CSV matrix")
    if len({len(r) for r in rows}) != 1:
        raise FormatError("ragged CSV matrix")
    return np.array(rows, dtype=float)


def load_matrix(path) -> np.ndarray:
    """Read ``.csv`` files as CSV and everything else as LSPM."""
    return read_csv(path) if str(path).lower().endswith(".csv") else read_matrix(path)


def checksum(X) -> str:
    return hashlib.sha256(encode_matrix(X)).hexdigest()
