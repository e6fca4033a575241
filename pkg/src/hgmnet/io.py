"""Matrix, grouping, and edge-list file formats.

Matrices travel either as comma-separated text (optional single header
row) or in a little-endian binary format: the 8-byte magic ``HGMMAT01``,
two unsigned 64-bit dimensions (rows, columns), then row-major float64
values.  Groups and edge lists are small CSV files with 1-based indices.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import MatrixParseError, NonFiniteError, NonRectangularError
from .model import GroupAssignment, PrecisionMatrix

MAGIC = b"HGMMAT01"
FORMATS = ("csv", "bin")

# %.17g round-trips every float64 exactly, keeping text output reproducible
_FLOAT_FMT = "%.17g"


def save_matrix(values: np.ndarray, path: str | Path, fmt: str = "csv") -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise MatrixParseError(f"can only save 2-D matrices, got ndim={values.ndim}")
    path = Path(path)
    if fmt == "csv":
        np.savetxt(path, values, fmt=_FLOAT_FMT, delimiter=",")
    elif fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<QQ", values.shape[0], values.shape[1]))
            fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())
    else:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")


def load_matrix(path: str | Path, fmt: str = "csv") -> np.ndarray:
    """Read a matrix, validating shape and finiteness.

    Raises MatrixParseError (bad magic, bad field, truncation),
    NonRectangularError (ragged rows, with the row index), or
    NonFiniteError (NaN/inf, with the location).
    """
    path = Path(path)
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "bin":
        return _load_bin(path)
    raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")


def _load_csv(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields:
                continue
            try:
                row = [float(f) for f in fields]
            except ValueError:
                if lineno == 1:
                    continue  # a single header row is allowed
                raise MatrixParseError(f"{path}: unparseable value on line {lineno}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise NonRectangularError(lineno, width, len(row))
            rows.append(row)
    if not rows:
        raise MatrixParseError(f"{path}: no data rows")
    out = np.asarray(rows, dtype=np.float64)
    _check_finite(out, path)
    return out


def _load_bin(path: Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise MatrixParseError(f"{path}: bad magic, not a matrix file")
    header_end = len(MAGIC) + 16
    if len(blob) < header_end:
        raise MatrixParseError(f"{path}: truncated header")
    n, p = struct.unpack("<QQ", blob[len(MAGIC) : header_end])
    expected = header_end + n * p * 8
    if len(blob) != expected:
        raise MatrixParseError(f"{path}: expected {expected} bytes for {n}x{p}, got {len(blob)}")
    out = np.frombuffer(blob[header_end:], dtype="<f8").reshape(n, p).astype(np.float64)
    _check_finite(out, path)
    return out


def _check_finite(values: np.ndarray, path: Path) -> None:
    if not np.isfinite(values).all():
        i, j = np.argwhere(~np.isfinite(values))[0]
        raise NonFiniteError(f"{path}: row {i + 1}, column {j + 1}")


def save_groups(path: str | Path, groups: GroupAssignment) -> None:
    """Write ``column,group`` rows, both 1-based."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["column", "group"])
        for j, lab in enumerate(groups.labels, start=1):
            w.writerow([j, int(lab) + 1])


def load_groups(path: str | Path, k: int | None = None) -> GroupAssignment:
    labels = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, fields in enumerate(reader, start=1):
            if not fields:
                continue
            try:
                col, lab = int(fields[0]), int(fields[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise MatrixParseError(f"{path}: bad group row on line {lineno}") from None
            labels.append((col, lab))
    if not labels:
        raise MatrixParseError(f"{path}: no group rows")
    labels.sort()
    lab = np.asarray([g - 1 for _, g in labels], dtype=np.int64)
    return GroupAssignment.from_labels(lab, k)


def save_edges(path: str | Path, precision: PrecisionMatrix) -> None:
    """Write nonzero upper-triangle entries (diagonal included) as i,j,value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "value"])
        vals = precision.values
        for i, j in zip(*np.nonzero(np.triu(precision.support))):
            w.writerow([int(i) + 1, int(j) + 1, _FLOAT_FMT % vals[i, j]])


def load_edges(path: str | Path, k: int | None = None) -> PrecisionMatrix:
    """Rebuild a precision matrix from an edge list written by save_edges.

    The diagonal of a positive definite matrix is fully nonzero, so the
    size can be inferred from the largest index when ``k`` is omitted.
    """
    entries = []
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields:
                continue
            try:
                entries.append((int(fields[0]), int(fields[1]), float(fields[2])))
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise MatrixParseError(f"{path}: bad edge row on line {lineno}") from None
    if not entries:
        raise MatrixParseError(f"{path}: no edges")
    size = k if k is not None else max(max(i, j) for i, j, _ in entries)
    om = np.zeros((size, size))
    for i, j, v in entries:
        if not (1 <= i <= size and 1 <= j <= size):
            raise MatrixParseError(f"{path}: edge ({i},{j}) outside a {size}x{size} matrix")
        om[i - 1, j - 1] = v
        om[j - 1, i - 1] = v
    return PrecisionMatrix.from_dense(om)


def save_vector(path: str | Path, values: np.ndarray, name: str = "value") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", name])
        for i, v in enumerate(np.asarray(values).ravel(), start=1):
            w.writerow([i, _FLOAT_FMT % v])
