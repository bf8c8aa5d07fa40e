"""Column-selection (AAMP) and entry-sampling (BEST) sketches."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import ZeroNormError
from .sq_access import SqMatrix, _AliasSampler, build_sq_matrix
from .validation import as_generator

__all__ = [
    "AampSketch",
    "BestSketch",
    "sample_aamp",
    "apply_aamp_columns",
    "aamp_columns_sparse",
    "sample_best",
    "best_product_bound_check",
]


def _bincount(idx, weights, minlength):
    """``np.bincount`` that also accepts complex weights."""
    if np.iscomplexobj(weights):
        return (np.bincount(idx, weights=weights.real, minlength=minlength)
                + 1j * np.bincount(idx, weights=weights.imag, minlength=minlength))
    return np.bincount(idx, weights=weights, minlength=minlength)


@dataclass(frozen=True)
class AampSketch:
    """``S`` in ``C^{n x s}`` whose ``j``-th column is ``e_{k_j} / sqrt(s p_{k_j})``.

    Attributes
    ----------
    n : int
        Ambient dimension.
    indices : ndarray of int64
        Sampled indices ``k_1 .. k_s``.
    scalings : ndarray
        ``1 / sqrt(s p_{k_j})``.
    probs : ndarray
        ``p_{k_j}``.
    """

    n: int
    indices: np.ndarray
    scalings: np.ndarray
    probs: np.ndarray

    @property
    def s(self):
        return int(self.indices.size)

    def to_dense(self):
        S = np.zeros((self.n, self.s))
        S[self.indices, np.arange(self.s)] = self.scalings
        return S

    def to_sparse(self):
        return sp.csc_matrix((self.scalings, (self.indices, np.arange(self.s))), shape=(self.n, self.s))

    def adjoint_apply(self, b):
        """``S^dagger b`` for a dense ``b`` of length ``n``."""
        return np.asarray(b)[self.indices] * self.scalings

    def apply(self, v):
        """``S v`` as a sparse ``(indices, values)`` pair with duplicates merged."""
        v = np.asarray(v)
        uniq, inv = np.unique(self.indices, return_inverse=True)
        vals = _bincount(inv, v * self.scalings, uniq.size)
        return uniq, vals


def sample_aamp(probs, s, rng=None):
    """Draw ``s`` i.i.d. indices from ``probs`` and attach the scalings ``1/sqrt(s p_k)``.

    Raises
    ------
    ValueError
        If ``probs`` does not sum to one within 1e-10 or ``s < 1``.
    ZeroNormError
        For an all-zero distribution.
    """
    p = np.asarray(probs, dtype=float).ravel()
    if s < 1:
        raise ValueError("sketch size must be positive")
    total = p.sum()
    if total <= 0:
        raise ZeroNormError("zero-norm distribution")
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"sampling distribution sums to {total!r}, not 1")
    rng = as_generator(rng)
    idx = _AliasSampler(p).sample(rng, int(s))
    pk = p[idx]
    return AampSketch(n=p.size, indices=idx, scalings=1.0 / np.sqrt(s * pk), probs=pk)


def aamp_columns_sparse(A, sketch):
    """``A S`` as a sparse CSC matrix built from SQ access to ``A^dagger``."""
    A = build_sq_matrix(A)
    if sketch.n != A.shape[1]:
        raise IndexError("sketch dimension does not match the matrix")
    slot, rows, vals = A.adjoint().gather_rows(sketch.indices)
    vals = np.conj(vals) * sketch.scalings[slot]
    return sp.csc_matrix((vals, (rows, slot)), shape=(A.shape[0], sketch.s))


def apply_aamp_columns(A, sketch):
    """Dense ``m x s`` matrix with columns ``A_{*,k_j} / sqrt(s p_{k_j})``."""
    if isinstance(A, SqMatrix) or sp.issparse(A):
        return aamp_columns_sparse(A, sketch).toarray()
    A = np.asarray(A)
    if sketch.indices.size and sketch.indices.max() >= A.shape[1]:
        raise IndexError("sketch index out of range")
    return A[:, sketch.indices] * sketch.scalings


class BestSketch:
    """Average of ``T`` one-entry estimators ``A_ij / p_ij e_i e_j^dagger``.

    Repeated draws of the same entry are merged, so at most ``T`` nonzeros
    are stored.
    """

    def __init__(self, shape, rows, cols, vals, T):
        self.shape = (int(shape[0]), int(shape[1]))
        self.rows = rows
        self.cols = cols
        self.vals = vals
        self.T = int(T)

    @property
    def nnz(self):
        return int(self.vals.size)

    def matvec(self, v):
        """``M v``."""
        return _bincount(self.rows, self.vals * np.asarray(v)[self.cols], self.shape[0])

    def rmatvec(self, v):
        """``M^dagger v``."""
        return _bincount(self.cols, np.conj(self.vals) * np.asarray(v)[self.rows], self.shape[1])

    def to_scipy(self):
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=self.shape)

    def to_dense(self):
        return self.to_scipy().toarray()


def sample_best(A, T, rng=None, adjoint=False, merge=True):
    """BEST sketch of ``A`` (or of ``A^dagger`` when ``adjoint``) with parameter ``T``.

    Entries are drawn with ``p_ij = |A_ij|^2 / ||A||_F^2`` by the two-stage
    row-then-entry sampler of :class:`~qisvt.sq_access.SqMatrix`.  The
    adjoint sketch uses the same law with indices swapped and values
    conjugated, which is exactly the BEST distribution of ``A^dagger``.
    """
    A = build_sq_matrix(A)
    if T < 1:
        raise ValueError("T must be positive")
    if A.frobenius_norm_sq <= 0:
        raise ZeroNormError("zero-norm distribution")
    rng = as_generator(rng)
    pos = A.sample_entry_positions(rng, size=int(T))
    rows = A._row_of_entry[pos]
    cols = A.indices[pos]
    data = A.data[pos]
    # A_ij / (T p_ij) with p_ij = |A_ij|^2 / ||A||_F^2
    vals = A.frobenius_norm_sq / (T * np.conj(data))
    m, n = A.shape
    if adjoint:
        rows, cols, vals, (m, n) = cols, rows, np.conj(vals), (n, m)
    if merge:
        keys = rows * n + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        vals = _bincount(inv, vals, uniq.size)
        rows, cols = uniq // n, uniq % n
    return BestSketch((m, n), rows, cols, vals, T)


def best_product_bound_check(X, A, Y, T, trials=1000, delta=0.1, rng=None):
    """Monte Carlo check of
    ``P[||XMY||_F >= ||XAY||_F + ||X||_F ||A||_F ||Y||_F / sqrt(delta T)] <= delta``.

    Returns a dict with the threshold, the empirical violation fraction and
    whether it is at most ``delta``.
    """
    rng = as_generator(rng)
    X = np.asarray(X)
    Y = np.asarray(Y)
    Ad = np.asarray(A.to_dense() if isinstance(A, SqMatrix) else A)
    Asq = build_sq_matrix(Ad)
    base = np.linalg.norm(X @ Ad @ Y)
    slack = np.linalg.norm(X) * math.sqrt(Asq.frobenius_norm_sq) * np.linalg.norm(Y) / math.sqrt(delta * T)
    threshold = base + slack
    violations = 0
    for _ in range(trials):
        M = sample_best(Asq, T, rng).to_dense()
        if np.linalg.norm(X @ M @ Y) >= threshold:
            violations += 1
    frac = violations / trials
    return {"threshold": float(threshold), "violation_fraction": frac, "delta": delta,
            "passed": frac <= delta}
