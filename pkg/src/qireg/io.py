"""Text formats for matrices and vectors.

Matrices come either as coordinate text (first data line ``m n nnz``, then
``nnz`` lines ``i j value`` with 0-based indices) or as dense CSV. Vectors
are one value per line. Lines starting with ``#`` are comments.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


def _data_lines(path):
    out = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            out.append((lineno, line))
    return out


def _read_coordinate(lines, path):
    (lineno, head), body = lines[0], lines[1:]
    try:
        m, n, nnz = (int(tok) for tok in head.split())
    except ValueError as exc:
        raise FormatError(f"{path}:{lineno}: expected header 'm n nnz'") from exc
    if m <= 0 or n <= 0 or nnz < 0:
        raise FormatError(f"{path}:{lineno}: bad dimensions")
    if len(body) != nnz:
        raise FormatError(f"{path}: header promises {nnz} entries, found {len(body)}")
    a = np.zeros((m, n))
    seen = set()
    for lineno, line in body:
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 'i j value'")
        try:
            i, j, x = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        if not (0 <= i < m and 0 <= j < n):
            raise FormatError(f"{path}:{lineno}: entry ({i}, {j}) outside {m}x{n}")
        if (i, j) in seen:
            raise FormatError(f"{path}:{lineno}: duplicate entry ({i}, {j})")
        seen.add((i, j))
        a[i, j] = x
    return a


def _read_csv(lines, path):
    rows = []
    for lineno, line in lines:
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: ragged rows")
    return np.array(rows)


def read_matrix(path):
    lines = _data_lines(path)
    if not lines:
        raise FormatError(f"{path}: no data")
    if str(path).endswith(".csv") or "," in lines[0][1]:
        a = _read_csv(lines, path)
    else:
        a = _read_coordinate(lines, path)
    if not np.all(np.isfinite(a)):
        raise FormatError(f"{path}: non-finite entry")
    return a


def read_vector(path):
    vals = []
    for lineno, line in _data_lines(path):
        try:
            vals.append(float(line))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not vals:
        raise FormatError(f"{path}: no data")
    return np.array(vals)


def write_matrix(path, a):
    a = np.asarray(a)
    i, j = np.nonzero(a)
    with open(path, "w") as fh:
        fh.write(f"{a.shape[0]} {a.shape[1]} {i.size}\n")
        for r, c in zip(i, j):
            fh.write(f"{r} {c} {float(a[r, c])!r}\n")


def write_vector(path, v):
    with open(path, "w") as fh:
        for x in np.asarray(v, dtype=np.float64):
            fh.write(f"{float(x)!r}\n")


def write_sparse(path, sv):
    """``dim nnz`` header then ``i value`` lines."""
    with open(path, "w") as fh:
        fh.write(f"# sparse coefficient vector\n{sv.dim} {sv.nnz}\n")
        for i, x in zip(sv.indices.tolist(), sv.values.tolist()):
            fh.write(f"{i} {x!r}\n")
