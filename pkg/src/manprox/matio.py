"""Matrix file formats: CSV and the MPX1 raw binary.

CSV: a header line ``rows,cols`` followed by the values row-major, one
matrix row per line, 17 significant digits.

MPX1: magic bytes ``MPX1``, then rows and cols as little-endian u64, then
rows*cols float64 values little-endian row-major.  Round-trips bit exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .exceptions import ManproxError

MAGIC = b"MPX1"


class MatrixFormatError(ManproxError, ValueError):
    pass


def save_csv(path, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    rows, cols = A.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{rows},{cols}\n")
        for row in A:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_csv(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        try:
            rows, cols = (int(tok) for tok in header.split(","))
        except ValueError as exc:
            raise MatrixFormatError(f"bad CSV header {header!r}") from exc
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (rows, cols):
        raise MatrixFormatError(
            f"CSV body shape {data.shape} does not match header ({rows}, {cols})"
        )
    return data


def save_mpx(path, A) -> None:
    A = np.ascontiguousarray(np.atleast_2d(np.asarray(A, dtype=np.float64)))
    rows, cols = A.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(A.astype("<f8", copy=False).tobytes(order="C"))


def load_mpx(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise MatrixFormatError(f"{path}: missing MPX1 magic")
    rows, cols = struct.unpack("<QQ", raw[4:20])
    expected = 20 + rows * cols * 8
    if len(raw) != expected:
        raise MatrixFormatError(
            f"{path}: expected {expected} bytes for {rows}x{cols}, got {len(raw)}"
        )
    return np.frombuffer(raw[20:], dtype="<f8").reshape(rows, cols).astype(np.float64)


def save_matrix(path, A) -> None:
    """Dispatch on extension: .mpx binary, anything else CSV."""
    if str(path).endswith(".mpx"):
        save_mpx(path, A)
    else:
        save_csv(path, A)


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MAGIC:
        return load_mpx(path)
    return load_csv(path)
