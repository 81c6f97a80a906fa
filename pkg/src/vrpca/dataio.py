"""Dataset file formats: dense binary, sparse text, and dense CSV.

Three interchangeable on-disk layouts for a d-by-n column data matrix:

* dense binary -- magic ``VRPD``, then three little-endian u32 fields
  (version, d, n), then d*n little-endian float64 values column-major;
* sparse text -- a ``#d=<d> n=<n>`` header line, then one line per
  column of space-separated ``index:value`` tokens with 0-based strictly
  increasing indices; a blank line is an all-zero column;
* dense CSV -- one column of the matrix per CSV row; lines starting
  with ``#`` are comments.

Floats in the text formats are written with ``repr`` so loading is an
exact round-trip and output never depends on the locale.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .linalg import DataMatrix

__all__ = [
    "DatasetFormatError",
    "FORMATS",
    "save_dataset",
    "load_dataset",
    "save_dense_binary",
    "load_dense_binary",
    "save_sparse_text",
    "load_sparse_text",
    "save_dense_csv",
    "load_dense_csv",
    "file_sha256",
]

MAGIC = b"VRPD"
BINARY_VERSION = 1
FORMATS = ("vrpd", "sparse", "csv")


class DatasetFormatError(ValueError):
    """A dataset file is malformed or uses an unrecognized layout."""


# -- dense binary ---------------------------------------------------------------


def save_dense_binary(X: DataMatrix, path) -> None:
    dense = X.to_dense()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", BINARY_VERSION, X.dim_d, X.count_n))
        fh.write(np.ascontiguousarray(dense.ravel(order="F"), dtype="<f8").tobytes())


def load_dense_binary(path) -> DataMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic, not a dense binary dataset")
    if len(blob) < 16:
        raise DatasetFormatError(f"{path}: truncated header")
    version, d, n = struct.unpack("<III", blob[4:16])
    if version != BINARY_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    expected = 16 + 8 * d * n
    if len(blob) != expected:
        raise DatasetFormatError(
            f"{path}: payload is {len(blob)} bytes, expected {expected} for d={d}, n={n}"
        )
    flat = np.frombuffer(blob, dtype="<f8", offset=16)
    return DataMatrix.from_dense(flat.reshape((d, n), order="F"))


# -- sparse text ------------------------------------------------------------------


def save_sparse_text(X: DataMatrix, path) -> None:
    lines = [f"#d={X.dim_d} n={X.count_n}"]
    if X.is_sparse:
        indptr, indices, data = X.sparse_arrays()
        for j in range(X.count_n):
            s, e = indptr[j], indptr[j + 1]
            lines.append(" ".join(f"{i}:{v!r}" for i, v in zip(indices[s:e], data[s:e])))
    else:
        dense = X.to_dense()
        for j in range(X.count_n):
            nz = np.nonzero(dense[:, j])[0]
            lines.append(" ".join(f"{i}:{dense[i, j]!r}" for i in nz))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_sparse_text(path, drop_zero_rows: bool = False):
    """Load a sparse text dataset.

    With ``drop_zero_rows`` the rows absent from every column are removed
    (they carry no component of any singular vector) and the surviving
    original row indices are returned alongside the matrix; otherwise the
    declared dimension is kept and the second element is None.
    """
    text = Path(path).read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#d="):
        raise DatasetFormatError(f"{path}: missing '#d=<d> n=<n>' header")
    try:
        head = lines[0][1:].split()
        d = int(head[0].split("=")[1])
        n = int(head[1].split("=")[1])
    except (IndexError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: malformed header {lines[0]!r}") from exc
    body = lines[1:]
    if len(body) != n:
        raise DatasetFormatError(
            f"{path}: header declares n={n} columns but file has {len(body)} lines"
        )
    columns = []
    for j, line in enumerate(body):
        tokens = line.split()
        idx = np.empty(len(tokens), dtype=np.int64)
        vals = np.empty(len(tokens), dtype=np.float64)
        for t, tok in enumerate(tokens):
            try:
                pos, val = tok.split(":", 1)
                idx[t] = int(pos)
                vals[t] = float(val)
            except ValueError as exc:
                raise DatasetFormatError(
                    f"{path}: column {j}: bad token {tok!r}"
                ) from exc
        columns.append((idx, vals))
    try:
        X = DataMatrix.from_sparse_columns(d, columns)
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc

    if not drop_zero_rows:
        return X, None
    indptr, indices, data = X.sparse_arrays()
    kept = np.unique(indices)
    if kept.size == d:
        return X, kept
    remap = np.full(d, -1, dtype=np.int64)
    remap[kept] = np.arange(kept.size)
    reduced = DataMatrix.from_csc(int(kept.size), indptr, remap[indices], data)
    return reduced, kept


# -- dense CSV ----------------------------------------------------------------------


def save_dense_csv(X: DataMatrix, path) -> None:
    dense = X.to_dense()
    lines = [",".join(repr(v) for v in dense[:, j]) for j in range(X.count_n)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_dense_csv(path) -> DataMatrix:
    rows = []
    d = None
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            values = [float(tok) for tok in stripped.split(",")]
        except ValueError as exc:
            raise DatasetFormatError(f"{path}:{lineno}: non-numeric entry") from exc
        if d is None:
            d = len(values)
        elif len(values) != d:
            raise DatasetFormatError(
                f"{path}:{lineno}: row has {len(values)} entries, expected {d}"
            )
        rows.append(values)
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    return DataMatrix.from_dense(np.asarray(rows).T)


# -- format dispatch -------------------------------------------------------------


def save_dataset(X: DataMatrix, path, fmt: str) -> None:
    if fmt == "vrpd":
        save_dense_binary(X, path)
    elif fmt == "sparse":
        save_sparse_text(X, path)
    elif fmt == "csv":
        save_dense_csv(X, path)
    else:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def load_dataset(path, drop_zero_rows: bool = False):
    """Load a dataset, sniffing the format from content.

    Returns (matrix, kept_rows) where kept_rows is None unless zero rows
    were dropped from a sparse file.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return load_dense_binary(path), None
    try:
        first = path.read_text(encoding="ascii").lstrip().splitlines()[0]
    except (UnicodeDecodeError, IndexError) as exc:
        raise DatasetFormatError(f"{path}: unrecognized dataset file") from exc
    if first.startswith("#d="):
        return load_sparse_text(path, drop_zero_rows=drop_zero_rows)
    return load_dense_csv(path), None


def file_sha256(path) -> str:
    """Hex content digest used as the dataset fingerprint in manifests."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
