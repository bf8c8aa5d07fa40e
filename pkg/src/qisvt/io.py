"""Reading and writing matrices, vectors and polynomials.

Matrices: Matrix Market coordinate files (``.mtx``) or dense CSV.  Vectors:
one value per line or a single CSV row.  Indices are 1-based on disk and
0-based in memory.  Malformed input raises
:class:`~qisvt.exceptions.ParseError` naming the file and line.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .chebyshev import ChebPoly
from .exceptions import ParseError
from .sq_access import SqMatrix, build_sq_matrix

__all__ = [
    "read_matrix",
    "read_matrix_market",
    "read_dense_csv",
    "write_matrix_market",
    "read_vector",
    "write_vector",
    "read_poly",
    "write_poly",
]


def _parse_number(tok, field, path, lineno):
    try:
        return float(tok)
    except ValueError:
        raise ParseError(path, lineno, f"invalid {field} {tok!r}") from None


def _parse_index(tok, bound, path, lineno):
    try:
        v = int(tok)
    except ValueError:
        raise ParseError(path, lineno, f"invalid index {tok!r}") from None
    if not 1 <= v <= bound:
        raise ParseError(path, lineno, f"index {v} outside 1..{bound}")
    return v - 1


def read_matrix_market(path):
    """Parse a ``%%MatrixMarket matrix coordinate {real|integer|complex} {general|symmetric|hermitian}`` file."""
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(path, 1, "empty file")
    head = lines[0].split()
    if len(head) < 5 or head[0].lower() != "%%matrixmarket" or head[1].lower() != "matrix":
        raise ParseError(path, 1, "missing '%%MatrixMarket matrix' header")
    fmt, field, symm = head[2].lower(), head[3].lower(), head[4].lower()
    if fmt != "coordinate":
        raise ParseError(path, 1, f"unsupported format {fmt!r} (only coordinate)")
    if field not in ("real", "integer", "complex"):
        raise ParseError(path, 1, f"unsupported field {field!r}")
    if symm not in ("general", "symmetric", "hermitian"):
        raise ParseError(path, 1, f"unsupported symmetry {symm!r}")
    lineno = 1
    body = iter(enumerate(lines[1:], start=2))
    size = None
    for lineno, line in body:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        size = s.split()
        break
    if size is None or len(size) != 3:
        raise ParseError(path, lineno, "expected a size line 'rows cols entries'")
    try:
        m, n, nnz = (int(v) for v in size)
    except ValueError:
        raise ParseError(path, lineno, "size line must contain three integers") from None
    if m < 1 or n < 1 or nnz < 0:
        raise ParseError(path, lineno, "matrix dimensions must be positive")
    width = 4 if field == "complex" else 3
    rows, cols, vals = [], [], []
    seen = {}
    for lineno, line in body:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        tok = s.split()
        if len(tok) != width:
            raise ParseError(path, lineno, f"expected {width} fields, got {len(tok)}")
        i = _parse_index(tok[0], m, path, lineno)
        j = _parse_index(tok[1], n, path, lineno)
        v = _parse_number(tok[2], "value", path, lineno)
        if field == "complex":
            v = complex(v, _parse_number(tok[3], "value", path, lineno))
        if (i, j) in seen:
            raise ParseError(path, lineno, f"duplicate entry ({i + 1}, {j + 1}), first on line {seen[(i, j)]}")
        seen[(i, j)] = lineno
        rows.append(i)
        cols.append(j)
        vals.append(v)
        if symm != "general" and i != j:
            rows.append(j)
            cols.append(i)
            vals.append(np.conj(v) if symm == "hermitian" else v)
    if len(seen) != nnz:
        raise ParseError(path, lineno, f"header announces {nnz} entries, found {len(seen)}")
    dtype = complex if field == "complex" else float
    return build_sq_matrix((np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                            np.array(vals, dtype=dtype)), shape=(m, n))


def read_dense_csv(path):
    """Dense matrix from CSV, one row per line."""
    path = str(path)
    data = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            vals = [_parse_number(c.strip(), "value", path, lineno) for c in row]
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(path, lineno, f"expected {width} columns, got {len(vals)}")
            data.append(vals)
    if not data:
        raise ParseError(path, 1, "no data rows")
    return build_sq_matrix(np.array(data))


def read_matrix(path):
    """Dispatch on extension: ``.mtx`` is Matrix Market, anything else dense CSV."""
    if str(path).lower().endswith(".mtx"):
        return read_matrix_market(path)
    return read_dense_csv(path)


def write_matrix_market(path, A, comment=None):
    A = build_sq_matrix(A) if not isinstance(A, SqMatrix) else A
    cplx = np.iscomplexobj(A.data)
    m, n = A.shape
    rows = A._row_of_entry
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate {'complex' if cplx else 'real'} general\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{m} {n} {A.nnz}\n")
        for i, j, v in zip(rows, A.indices, A.data):
            if cplx:
                fh.write(f"{i + 1} {j + 1} {float(v.real)!r} {float(v.imag)!r}\n")
            else:
                fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def read_vector(path):
    """Vector from one value per line, or from a single comma-separated row."""
    path = str(path)
    vals = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    content = [(k, ln.strip()) for k, ln in enumerate(lines, start=1)
               if ln.strip() and not ln.strip().startswith("#")]
    if not content:
        raise ParseError(path, 1, "no values")
    if len(content) == 1 and "," in content[0][1]:
        lineno, line = content[0]
        vals = [_parse_number(t.strip(), "value", path, lineno) for t in line.split(",")]
    else:
        for lineno, line in content:
            if "," in line or len(line.split()) != 1:
                raise ParseError(path, lineno, "expected one value per line")
            vals.append(_parse_number(line, "value", path, lineno))
    return np.array(vals)


def write_vector(path, v):
    with open(path, "w", encoding="utf-8") as fh:
        for x in np.asarray(v).ravel():
            fh.write(f"{float(x)!r}\n")


def read_poly(path):
    """:class:`ChebPoly` from JSON: ``{"coefficients": [...], "parity": "odd"}`` or a bare list."""
    path = str(path)
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    try:
        if isinstance(obj, list):
            return ChebPoly(obj)
        return ChebPoly(obj["coefficients"], obj.get("parity"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, 1, f"invalid polynomial: {exc}") from None


def write_poly(path, p):
    Path(path).write_text(p.to_json() + "\n", encoding="utf-8")
