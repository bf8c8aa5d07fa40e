"""Sampling-and-query access to vectors and matrices.

A vector with SQ access answers three kinds of requests in constant time:
entry queries, draws of an index ``i`` with probability ``|v_i|^2 / ||v||^2``,
and a norm query.  Matrices get SQ access to every row plus SQ access to the
vector of row norms, which together give two-stage sampling of entries with
probability ``|A_ij|^2 / ||A||_F^2``.

Oversampled access (:class:`OversampledVector`) relaxes the sampling part: we
can only sample from a dominating vector ``v~`` with ``|v~_i| >= |v_i|`` and
``||v~||^2 = phi ||v||^2``.  Rejection sampling converts that back into exact
samples at an expected cost of ``phi`` attempts per sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numba
import numpy as np
import scipy.sparse as sp

from .exceptions import (
    QisvtError,
    RejectionBudgetExceeded,
    VanishingCombinationError,
    ZeroNormError,
)
from .validation import as_generator

__all__ = [
    "SqVector",
    "SqMatrix",
    "OversampledVector",
    "build_sq_vector",
    "build_sq_matrix",
    "oversample_to_sample",
    "oversample_norm_estimate",
    "linear_combination_access",
    "adjoint_combination_access",
]


# ---------------------------------------------------------------------------
# alias tables
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _build_segmented_alias(weights, offsets):
    """Vose's two-queue alias construction, run independently per segment.

    Segment ``s`` covers ``weights[offsets[s]:offsets[s+1]]``.  Returned alias
    targets are local to their segment.  Both queues are FIFO and seeded in
    increasing index order, so ties resolve toward the lowest index.
    """
    total = weights.shape[0]
    prob = np.ones(total)
    alias = np.zeros(total, dtype=np.int64)
    small = np.empty(total, dtype=np.int64)
    large = np.empty(total, dtype=np.int64)
    scaled = np.empty(total)
    for s in range(offsets.shape[0] - 1):
        lo = offsets[s]
        n = offsets[s + 1] - lo
        if n == 0:
            continue
        tot = 0.0
        for k in range(n):
            tot += weights[lo + k]
            alias[lo + k] = k
        if tot <= 0.0:
            for k in range(n):
                prob[lo + k] = 0.0
            continue
        ns = 0
        nl = 0
        for k in range(n):
            scaled[k] = weights[lo + k] * n / tot
            if scaled[k] < 1.0:
                small[ns] = k
                ns += 1
            else:
                large[nl] = k
                nl += 1
        hs = 0
        hl = 0
        while hs < ns and hl < nl:
            lo_k = small[hs]
            hs += 1
            g = large[hl]
            prob[lo + lo_k] = scaled[lo_k]
            alias[lo + lo_k] = g
            scaled[g] = (scaled[g] + scaled[lo_k]) - 1.0
            if scaled[g] < 1.0:
                hl += 1
                small[ns] = g
                ns += 1
        # Leftovers are exactly 1 up to rounding.
        while hl < nl:
            prob[lo + large[hl]] = 1.0
            hl += 1
        while hs < ns:
            prob[lo + small[hs]] = 1.0
            hs += 1
    return prob, alias


def _sample_segments(prob, alias, offsets, seg, rng):
    """Draw one local index from each segment listed in ``seg``."""
    seg = np.asarray(seg, dtype=np.int64)
    start = offsets[seg]
    lengths = offsets[seg + 1] - start
    j = (rng.random(seg.shape[0]) * lengths).astype(np.int64)
    np.minimum(j, lengths - 1, out=j)
    pos = start + j
    coin = rng.random(seg.shape[0])
    return np.where(coin < prob[pos], j, alias[pos])


def _alias_probabilities(prob, alias, lo, hi):
    """Exact sampling distribution encoded by one alias segment (for checks)."""
    n = hi - lo
    p = prob[lo:hi].copy()
    np.add.at(p, alias[lo:hi], 1.0 - prob[lo:hi])
    return p / n


class _AliasSampler:
    """Single-segment alias table over arbitrary nonnegative weights."""

    def __init__(self, weights):
        w = np.ascontiguousarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        self.total = float(w.sum())
        self._offsets = np.array([0, w.size], dtype=np.int64)
        self._prob, self._alias = _build_segmented_alias(w, self._offsets)

    def sample(self, rng, size):
        if self.total <= 0.0:
            raise ZeroNormError("zero-norm distribution")
        seg = np.zeros(size, dtype=np.int64)
        return _sample_segments(self._prob, self._alias, self._offsets, seg, rng)


# ---------------------------------------------------------------------------
# vectors
# ---------------------------------------------------------------------------


class SqVector:
    """Sampling and query access to a (sparse) vector.

    Build with :func:`build_sq_vector`.  Only the support is stored, so the
    structure costs ``O(nnz)`` memory and construction time.

    Attributes
    ----------
    n : int
        Ambient length.
    indices : ndarray of int64
        Sorted support.
    values : ndarray
        Entries on the support.
    squared_norm : float
        ``||v||^2``.
    """

    def __init__(self, n, indices, values, _prob=None, _alias=None):
        self.n = int(n)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.values = np.asarray(values)
        weights = np.abs(self.values) ** 2
        self.squared_norm = float(math.fsum(weights)) if weights.size else 0.0
        self._offsets = np.array([0, self.indices.size], dtype=np.int64)
        if _prob is None:
            _prob, _alias = _build_segmented_alias(
                np.ascontiguousarray(weights, dtype=np.float64), self._offsets
            )
        self._prob = _prob
        self._alias = _alias

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"SqVector(n={self.n}, nnz={self.nnz}, norm={self.norm:.6g})"

    @property
    def nnz(self):
        return int(self.indices.size)

    @property
    def norm(self):
        return math.sqrt(self.squared_norm)

    @property
    def dtype(self):
        return self.values.dtype

    def query(self, i):
        """Entries at index ``i`` (scalar or array); zero off the support."""
        i = np.asarray(i, dtype=np.int64)
        if np.any((i < 0) | (i >= self.n)):
            raise IndexError("index out of range")
        if self.indices.size == 0:
            return np.zeros(i.shape, dtype=self.values.dtype if self.values.size else float)
        pos = np.searchsorted(self.indices, i)
        pos_c = np.minimum(pos, self.indices.size - 1)
        hit = self.indices[pos_c] == i
        out = np.where(hit, self.values[pos_c], 0)
        return out.astype(self.values.dtype, copy=False)

    def sample(self, rng=None, size=None):
        """Indices drawn with probability ``|v_i|^2 / ||v||^2``."""
        if self.squared_norm <= 0.0:
            raise ZeroNormError("zero-norm distribution")
        rng = as_generator(rng)
        k = 1 if size is None else int(np.prod(size))
        seg = np.zeros(k, dtype=np.int64)
        local = _sample_segments(self._prob, self._alias, self._offsets, seg, rng)
        idx = self.indices[local]
        return int(idx[0]) if size is None else idx.reshape(size)

    def probabilities(self):
        """Dense sampling distribution implied by the alias table."""
        p = np.zeros(self.n)
        if self.squared_norm > 0:
            p[self.indices] = _alias_probabilities(self._prob, self._alias, 0, self.indices.size)
        return p

    def to_dense(self):
        out = np.zeros(self.n, dtype=self.values.dtype if self.values.size else float)
        out[self.indices] = self.values
        return out


def build_sq_vector(v, n=None):
    """Build :class:`SqVector` from a dense array, a scipy sparse vector, or
    an ``(indices, values)`` pair (``n`` required in that case).

    Exact zeros are dropped from the support.
    """
    if isinstance(v, SqVector):
        return v
    if isinstance(v, tuple):
        if n is None:
            raise ValueError("n is required for (indices, values) input")
        idx = np.asarray(v[0], dtype=np.int64).ravel()
        vals = np.asarray(v[1]).ravel()
        if idx.shape != vals.shape:
            raise ValueError("indices and values differ in length")
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexError("index out of range")
        order = np.argsort(idx, kind="stable")
        idx, vals = idx[order], vals[order]
        if idx.size > 1 and np.any(np.diff(idx) == 0):
            raise ValueError("duplicate entry")
        keep = vals != 0
        return SqVector(n, idx[keep], vals[keep])
    if sp.issparse(v):
        v = sp.coo_matrix(v)
        if min(v.shape) != 1:
            raise ValueError("expected a sparse vector")
        length = max(v.shape)
        idx = v.col if v.shape[0] == 1 else v.row
        return build_sq_vector((idx, v.data), n=length)
    arr = np.asarray(v)
    if arr.ndim != 1:
        arr = arr.ravel()
    if not np.iscomplexobj(arr):
        arr = arr.astype(np.float64, copy=False)
    idx = np.flatnonzero(arr)
    return SqVector(arr.size, idx, arr[idx])


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------


class SqMatrix:
    """Sampling and query access to a sparse ``m x n`` matrix.

    Stored as CSR with one alias table per row (laid out flat, aligned with
    the CSR data) and an :class:`SqVector` over the row norms.

    Build with :func:`build_sq_matrix`.
    """

    def __init__(self, shape, indptr, indices, data):
        self.shape = (int(shape[0]), int(shape[1]))
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.asarray(data)
        m, n = self.shape
        weights = np.ascontiguousarray(np.abs(self.data) ** 2, dtype=np.float64)
        rows = np.repeat(np.arange(m, dtype=np.int64), np.diff(self.indptr))
        self._row_of_entry = rows
        self._keys = rows * n + self.indices
        row_sq = np.bincount(rows, weights=weights, minlength=m) if m else np.zeros(0)
        self._row_sq = row_sq
        self.frobenius_norm_sq = float(math.fsum(weights)) if weights.size else 0.0
        self.row_norms = build_sq_vector(np.sqrt(row_sq))
        self._prob, self._alias = _build_segmented_alias(weights, self.indptr)
        self._adjoint = None

    def __repr__(self):
        return f"SqMatrix(shape={self.shape}, nnz={self.nnz})"

    @property
    def nnz(self):
        return int(self.data.size)

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def frobenius_norm(self):
        return math.sqrt(self.frobenius_norm_sq)

    def row_norm_sq(self, i):
        return self._row_sq[np.asarray(i, dtype=np.int64)]

    def query(self, i, j):
        """Entries ``A[i, j]``; broadcasts ``i`` against ``j``."""
        i, j = np.broadcast_arrays(np.asarray(i, dtype=np.int64), np.asarray(j, dtype=np.int64))
        m, n = self.shape
        if np.any((i < 0) | (i >= m) | (j < 0) | (j >= n)):
            raise IndexError("index out of range")
        if self.nnz == 0:
            return np.zeros(i.shape, dtype=self.data.dtype)
        key = i * n + j
        pos = np.searchsorted(self._keys, key)
        pos_c = np.minimum(pos, self.nnz - 1)
        hit = self._keys[pos_c] == key
        return np.where(hit, self.data[pos_c], 0).astype(self.data.dtype, copy=False)

    def row(self, i):
        """``(columns, values)`` of row ``i``."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def row_vector(self, i):
        """:class:`SqVector` view of row ``i`` sharing this matrix's alias table."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return SqVector(
            self.shape[1],
            self.indices[lo:hi],
            self.data[lo:hi],
            _prob=self._prob[lo:hi],
            _alias=self._alias[lo:hi],
        )

    def sample_rows(self, rng=None, size=1):
        return self.row_norms.sample(rng, size=size)

    def sample_in_rows(self, rows, rng=None):
        """One column index per requested row, drawn from that row's ell_2^2 law."""
        rng = as_generator(rng)
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size and np.any(self._row_sq[rows] <= 0):
            raise ZeroNormError("zero-norm distribution")
        local = _sample_segments(self._prob, self._alias, self.indptr, rows, rng)
        return self.indices[self.indptr[rows] + local]

    def sample_entries(self, rng=None, size=1):
        """Two-stage draw of ``(i, j)`` with probability ``|A_ij|^2 / ||A||_F^2``."""
        if self.frobenius_norm_sq <= 0:
            raise ZeroNormError("zero-norm distribution")
        rng = as_generator(rng)
        rows = self.row_norms.sample(rng, size=size)
        cols = self.sample_in_rows(rows, rng)
        return rows, cols

    def sample_entry_positions(self, rng=None, size=1):
        """Like :meth:`sample_entries` but returns positions into the CSR arrays."""
        if self.frobenius_norm_sq <= 0:
            raise ZeroNormError("zero-norm distribution")
        rng = as_generator(rng)
        rows = np.asarray(self.row_norms.sample(rng, size=size), dtype=np.int64)
        local = _sample_segments(self._prob, self._alias, self.indptr, rows, rng)
        return self.indptr[rows] + local

    def gather_rows(self, rows):
        """Concatenated nonzeros of the requested rows.

        Returns ``(slot, cols, vals)`` where ``slot[k]`` is the position in
        ``rows`` that the k-th nonzero came from.
        """
        rows = np.asarray(rows, dtype=np.int64)
        starts = self.indptr[rows]
        counts = self.indptr[rows + 1] - starts
        slot = np.repeat(np.arange(rows.size, dtype=np.int64), counts)
        if slot.size == 0:
            return slot, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=self.data.dtype)
        first = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
        pos = first + np.arange(slot.size, dtype=np.int64)
        return slot, self.indices[pos], self.data[pos]

    def adjoint(self):
        """SQ access to the conjugate transpose (built once, then cached)."""
        if self._adjoint is None:
            adj = _from_triples(
                (self.shape[1], self.shape[0]),
                self.indices,
                self._row_of_entry,
                np.conj(self.data),
                check_duplicates=False,
            )
            adj._adjoint = self
            self._adjoint = adj
        return self._adjoint

    def column_norms_sq(self):
        return self.adjoint()._row_sq

    def to_scipy(self):
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self):
        return self.to_scipy().toarray()

    def is_hermitian(self, tol=0.0):
        if self.shape[0] != self.shape[1]:
            return False
        diff = self.to_scipy() - self.adjoint().to_scipy()
        return bool(diff.nnz == 0 or np.max(np.abs(diff.data)) <= tol)


def _from_triples(shape, rows, cols, vals, check_duplicates=True):
    m, n = int(shape[0]), int(shape[1])
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals).ravel()
    if not (rows.shape == cols.shape == vals.shape):
        raise ValueError("row, column and value arrays differ in length")
    if rows.size and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
        raise IndexError("index out of range")
    if not np.iscomplexobj(vals):
        vals = vals.astype(np.float64, copy=False)
    keys = rows * n + cols
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    if check_duplicates and keys.size > 1:
        dup = np.flatnonzero(np.diff(keys) == 0)
        if dup.size:
            k = keys[dup[0]]
            raise ValueError(f"duplicate entry ({k // n}, {k % n})")
    rows, cols, vals = rows[order], cols[order], vals[order]
    keep = vals != 0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=m), out=indptr[1:])
    return SqMatrix((m, n), indptr, cols, vals)


def build_sq_matrix(A, shape=None):
    """Build :class:`SqMatrix` in ``O(nnz log nnz)`` time.

    Parameters
    ----------
    A : triples, ndarray, scipy sparse matrix or SqMatrix
        Triples are given as ``(rows, cols, vals)`` with 0-based indices and
        require ``shape``.
    shape : tuple of int, optional

    Raises
    ------
    ValueError
        On duplicate ``(i, j)`` triples ("duplicate entry").
    """
    if isinstance(A, SqMatrix):
        return A
    if isinstance(A, tuple) and len(A) == 3:
        if shape is None:
            raise ValueError("shape is required for triple input")
        if shape[0] < 1 or shape[1] < 1:
            raise ValueError("matrix dimensions must be positive")
        return _from_triples(shape, *A)
    if sp.issparse(A):
        coo = sp.coo_matrix(A)
        return _from_triples(coo.shape, coo.row, coo.col, coo.data)
    arr = np.asarray(A)
    if arr.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    rows, cols = np.nonzero(arr)
    return _from_triples(arr.shape, rows, cols, arr[rows, cols], check_duplicates=False)


# ---------------------------------------------------------------------------
# oversampled access
# ---------------------------------------------------------------------------


@dataclass
class OversampledVector:
    """``phi``-oversampling and query access to a vector ``v``.

    ``bound`` is anything with ``sample(rng, size)``, ``query(idx)`` and a
    ``squared_norm`` attribute; its magnitudes must dominate ``|v_i|``.
    """

    n: int
    query: Callable[[np.ndarray], np.ndarray]
    bound: Any
    phi: float
    squared_norm: float | None = None
    info: dict = field(default_factory=dict)

    def bound_magnitude(self, idx):
        return np.abs(self.bound.query(idx))


def _acceptance_ratio(ov, idx):
    v = np.abs(ov.query(idx)) ** 2
    vt = ov.bound_magnitude(idx) ** 2
    bad = v > vt * (1 + 1e-9) + 1e-300
    if np.any(bad):
        raise QisvtError("bounding vector does not dominate the target entrywise")
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(vt > 0, v / vt, 0.0)
    return np.minimum(ratio, 1.0)


def oversample_to_sample(ov, delta=0.01, rng=None, size=None, return_attempts=False):
    """Exact ell_2^2 samples of ``v`` by rejection from the bounding vector.

    Each attempt draws ``j`` from the bound and keeps it with probability
    ``|v_j|^2 / |v~_j|^2``.  A sample that has not been accepted after
    ``ceil(2 phi ln(size/delta))`` attempts raises
    :class:`~qisvt.exceptions.RejectionBudgetExceeded`, so ``delta`` bounds
    the failure probability of the whole batch.
    """
    rng = as_generator(rng)
    if not np.isfinite(ov.phi) or ov.phi < 1:
        raise ValueError("oversampling factor must be finite and >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    k = 1 if size is None else int(size)
    budget = max(1, int(math.ceil(2.0 * ov.phi * math.log(k / delta))))
    out = np.full(k, -1, dtype=np.int64)
    attempts = np.zeros(k, dtype=np.int64)
    pending = np.arange(k)
    for _ in range(budget):
        if pending.size == 0:
            break
        cand = np.asarray(ov.bound.sample(rng, size=pending.size), dtype=np.int64)
        ratio = _acceptance_ratio(ov, cand)
        attempts[pending] += 1
        ok = rng.random(pending.size) < ratio
        out[pending[ok]] = cand[ok]
        pending = pending[~ok]
    if pending.size:
        raise RejectionBudgetExceeded(
            f"rejection budget exceeded after {budget} attempts "
            "(oversampling factor underestimated or norm close to zero)"
        )
    if size is None:
        return (int(out[0]), int(attempts[0])) if return_attempts else int(out[0])
    return (out, attempts) if return_attempts else out


def oversample_norm_estimate(ov, nu=0.1, delta=0.1, rng=None):
    """Estimate ``||v||^2`` to relative error ``nu`` with probability ``1 - delta``.

    Median of ``ceil(8 ln(1/delta))`` group means, each over ``ceil(4 phi / nu^2)``
    draws of ``||v~||^2 |v_i|^2 / |v~_i|^2`` with ``i`` sampled from the bound.
    """
    rng = as_generator(rng)
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if ov.bound.squared_norm <= 0:
        return 0.0
    groups = max(1, int(math.ceil(8.0 * math.log(1.0 / delta))))
    per_group = max(1, int(math.ceil(4.0 * ov.phi / nu**2)))
    idx = np.asarray(ov.bound.sample(rng, size=groups * per_group), dtype=np.int64)
    z = _acceptance_ratio(ov, idx) * ov.bound.squared_norm
    return float(np.median(z.reshape(groups, per_group).mean(axis=1)))


def _stopping_rule_norm(query, bound, nu, delta, rng, max_samples=10_000_000):
    """Stopping-rule estimate of ``||u||^2`` when no oversampling factor is known.

    Ratios ``|u_i|^2 / |u~_i|^2`` lie in [0, 1]; sampling until their sum
    reaches ``Upsilon`` gives a relative ``nu`` estimate with probability
    ``1 - delta`` after about ``Upsilon * phi`` draws.
    """
    upsilon = 1.0 + 4.0 * (math.e - 2.0) * (1.0 + nu) * math.log(2.0 / delta) / nu**2
    total = 0.0
    drawn = 0
    batch = 1024
    while drawn < max_samples:
        idx = np.asarray(bound.sample(rng, size=batch), dtype=np.int64)
        u = np.abs(query(idx)) ** 2
        ut = np.abs(bound.query(idx)) ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.minimum(np.where(ut > 0, u / ut, 0.0), 1.0)
        csum = total + np.cumsum(z)
        hit = np.flatnonzero(csum >= upsilon)
        if hit.size:
            n_used = drawn + int(hit[0]) + 1
            return upsilon / n_used * bound.squared_norm
        total = float(csum[-1])
        drawn += batch
        batch = min(batch * 2, 1 << 20)
    raise VanishingCombinationError("vanishing combination (norm estimate did not converge)")


class _MixtureBound:
    """Bounding vector for ``sum_t lambda_t v_t``: ``|u~_i|^2 = tau sum_t |lambda_t v~_t(i)|^2``."""

    def __init__(self, bounds, coeffs):
        self.bounds = list(bounds)
        self.coeffs = np.asarray(coeffs)
        self.tau = len(self.bounds)
        self._weights = np.array(
            [abs(c) ** 2 * b.squared_norm for b, c in zip(self.bounds, self.coeffs)], dtype=float
        )
        self.squared_norm = float(self.tau * math.fsum(self._weights))
        self._picker = _AliasSampler(self._weights) if self._weights.sum() > 0 else None

    def sample(self, rng, size=1):
        if self._picker is None:
            raise ZeroNormError("zero-norm distribution")
        comp = self._picker.sample(rng, int(size))
        out = np.empty(comp.size, dtype=np.int64)
        for t in np.unique(comp):
            mask = comp == t
            out[mask] = self.bounds[t].sample(rng, size=int(mask.sum()))
        return out

    def query(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        acc = np.zeros(idx.shape)
        for b, c in zip(self.bounds, self.coeffs):
            acc += abs(c) ** 2 * np.abs(b.query(idx)) ** 2
        return np.sqrt(self.tau * acc)


class _SqBound:
    """Adapter exposing an :class:`OversampledVector`'s bound magnitudes."""

    def __init__(self, ov):
        self._ov = ov
        self.squared_norm = ov.bound.squared_norm

    def sample(self, rng, size=1):
        return self._ov.bound.sample(rng, size=size)

    def query(self, idx):
        return self._ov.bound_magnitude(idx)


def _finish_combination(n, query, bound, norm_sq, nu, delta, rng, info):
    if norm_sq is None:
        norm_sq = _stopping_rule_norm(query, bound, nu, delta, rng)
        info = {**info, "norm_estimated": True}
    if norm_sq <= 0:
        raise VanishingCombinationError("vanishing combination")
    phi = bound.squared_norm / norm_sq
    return OversampledVector(n=n, query=query, bound=bound, phi=max(phi, 1.0),
                             squared_norm=norm_sq, info=info)


def linear_combination_access(vectors, coefficients, norm_sq=None, nu=0.1, delta=0.01, rng=None):
    """Oversampled access to ``u = sum_t lambda_t v_t``.

    The resulting oversampling factor is
    ``tau * sum_t phi_t ||lambda_t v_t||^2 / ||u||^2``.  ``norm_sq`` is
    ``||u||^2`` if known; otherwise it is estimated to relative error ``nu``.

    Raises
    ------
    VanishingCombinationError
        If ``||u|| = 0``.
    """
    vectors = list(vectors)
    lam = np.asarray(coefficients)
    if len(vectors) == 0 or lam.shape != (len(vectors),):
        raise ValueError("need one coefficient per vector")
    n = len(vectors[0]) if isinstance(vectors[0], SqVector) else vectors[0].n
    bounds, queries = [], []
    for v in vectors:
        if isinstance(v, SqVector):
            bounds.append(v)
            queries.append(v.query)
        elif isinstance(v, OversampledVector):
            bounds.append(_SqBound(v))
            queries.append(v.query)
        else:
            raise TypeError("expected SqVector or OversampledVector")
        if (len(v) if isinstance(v, SqVector) else v.n) != n:
            raise ValueError("all vectors must have the same length")

    def query(idx):
        idx = np.asarray(idx, dtype=np.int64)
        return sum(c * q(idx) for c, q in zip(lam, queries))

    bound = _MixtureBound(bounds, lam)
    return _finish_combination(n, query, bound, norm_sq, nu, delta, as_generator(rng),
                               {"tau": bound.tau})


class _RowMixtureBound:
    """Bounding vector for ``A^dagger x + eta b`` built from rows of ``A``."""

    _CHUNK = 1 << 22

    def __init__(self, A, rows, coeffs, b, eta):
        self.A = A
        self.rows = np.asarray(rows, dtype=np.int64)
        self.coeffs = np.asarray(coeffs)
        self.b = b
        self.eta = eta
        self.has_b = b is not None and eta != 0 and b.squared_norm > 0
        self.tau = self.rows.size + (1 if self.has_b else 0)
        w = np.abs(self.coeffs) ** 2 * A.row_norm_sq(self.rows)
        if self.has_b:
            w = np.append(w, abs(eta) ** 2 * b.squared_norm)
        self._weights = w
        self.squared_norm = float(self.tau * math.fsum(w)) if w.size else 0.0
        self._picker = _AliasSampler(w) if self.squared_norm > 0 else None

    def sample(self, rng, size=1):
        if self._picker is None:
            raise ZeroNormError("zero-norm distribution")
        comp = self._picker.sample(rng, int(size))
        out = np.empty(comp.size, dtype=np.int64)
        from_rows = comp < self.rows.size
        if np.any(from_rows):
            out[from_rows] = self.A.sample_in_rows(self.rows[comp[from_rows]], rng)
        if np.any(~from_rows):
            out[~from_rows] = self.b.sample(rng, size=int((~from_rows).sum()))
        return out

    def _blocks(self, idx):
        step = max(1, self._CHUNK // max(1, self.rows.size))
        for lo in range(0, idx.size, step):
            yield lo, idx[lo:lo + step]

    def query(self, idx):
        idx = np.asarray(idx, dtype=np.int64).ravel()
        out = np.zeros(idx.size)
        w = np.abs(self.coeffs) ** 2
        for lo, blk in self._blocks(idx):
            acc = np.zeros(blk.size)
            if self.rows.size:
                acc += w @ (np.abs(self.A.query(self.rows[:, None], blk[None, :])) ** 2)
            if self.has_b:
                acc += abs(self.eta) ** 2 * np.abs(self.b.query(blk)) ** 2
            out[lo:lo + blk.size] = np.sqrt(self.tau * acc)
        return out

    def value(self, idx):
        """Entries of ``A^dagger x + eta b`` itself."""
        idx = np.asarray(idx, dtype=np.int64).ravel()
        dtype = np.result_type(self.A.dtype, self.coeffs.dtype,
                               self.b.dtype if self.b is not None else float)
        out = np.zeros(idx.size, dtype=dtype)
        for lo, blk in self._blocks(idx):
            acc = np.zeros(blk.size, dtype=dtype)
            if self.rows.size:
                acc += self.coeffs @ np.conj(self.A.query(self.rows[:, None], blk[None, :]))
            if self.b is not None and self.eta != 0:
                acc += self.eta * self.b.query(blk)
            out[lo:lo + blk.size] = acc
        return out


def adjoint_combination_access(A, x_indices, x_values, eta=0.0, b=None, norm_sq=None,
                               nu=0.1, delta=0.01, rng=None):
    """Oversampled access to ``u = A^dagger x + eta b`` for sparse ``x``.

    ``phi = (||x||_0 + 1) (sum_k ||x_k A_k||^2 + ||eta b||^2) / ||u||^2``;
    each entry query of ``u`` costs ``||x||_0`` queries to ``A``.
    """
    A = build_sq_matrix(A)
    rows = np.asarray(x_indices, dtype=np.int64)
    coeffs = np.asarray(x_values)
    keep = coeffs != 0
    rows, coeffs = rows[keep], coeffs[keep]
    bound = _RowMixtureBound(A, rows, coeffs, b, eta)
    return _finish_combination(A.shape[1], bound.value, bound, norm_sq, nu, delta,
                               as_generator(rng), {"tau": bound.tau})
