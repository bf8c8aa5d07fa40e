"""Sketched singular value transformation by matrix Clenshaw recurrences.

For an odd polynomial ``p(x) = x q(x^2)`` we compute a sparse ``x`` with
``A x ~ p(A) b = A q(A^dagger A) b``; for an even ``p(x) = q(x^2)`` we compute
a sparse ``x`` and scalar ``eta`` with ``A^dagger x + eta b ~ q(A^dagger A) b``.
The iterations run in the small sketched space: a column-selection sketch
``S``, a row-selection sketch ``T``, the dense product ``TAS`` (or ``SAT``),
and fresh entry-sampling sketches of it at every step.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .chebyshev import (
    ChebPoly,
    chebyshev_grid,
    cheb_eval_direct,
    clenshaw_iterate_poly,
    even_tilde_coeffs,
)
from .exceptions import ParityError, ZeroNormError
from .sketch import _bincount, aamp_columns_sparse, sample_aamp, sample_best
from .sq_access import (
    SqMatrix,
    SqVector,
    _RowMixtureBound,
    _stopping_rule_norm,
    build_sq_matrix,
    build_sq_vector,
    oversample_to_sample,
    OversampledVector,
)
from .validation import as_generator, check_probability

__all__ = [
    "SvtParams",
    "SvtOutput",
    "odd_svt",
    "even_svt",
    "hermitian_svt",
    "exact_matrix_clenshaw_hermitian",
    "output_entry",
    "output_sample",
    "output_norm",
    "spectral_norm_check",
    "default_mu",
    "stability_conditions",
]


@dataclass(frozen=True)
class SvtParams:
    """Accuracy targets and sketch sizes.

    ``s``, ``t`` and ``r`` default to
    ``s = t = ceil(c1 ||A||_F^2 ln(n/delta') / (mu eps)^2)`` and
    ``r = ceil(c2 d^4 ||A||_F^2 (s + t))`` with ``delta' = delta / 3``; these
    are usually far too large for a workstation, so pass explicit sizes.
    ``exact=True`` bypasses every sketch.
    """

    eps: float = 0.1
    delta: float = 0.1
    mu: float | None = None
    s: int | None = None
    t: int | None = None
    r: int | None = None
    c1: float = 1.0
    c2: float = 1.0
    exact: bool = False
    check_stability: bool = False
    reuse_best: bool = False
    check_norm: bool = True
    max_dense_entries: int = 500_000_000

    def __post_init__(self):
        check_probability("eps", self.eps)
        check_probability("delta", self.delta)
        if self.mu is not None and not self.mu > 0:
            raise ValueError("mu must be positive")
        for name in ("s", "t", "r"):
            v = getattr(self, name)
            if v is not None and int(v) < 1:
                raise ValueError(f"{name} must be a positive integer")


def _half_degree(p):
    return (p.degree - 1) // 2 if p.parity == "odd" else p.degree // 2


def default_mu(p):
    """``1 / (4 d^2 ln(d + 2) ||p||_sup)`` with ``d`` the half degree."""
    d = max(_half_degree(p), 1)
    sup = max(p.sup_norm(), 1e-300)
    return 1.0 / (4.0 * d * d * math.log(d + 2) * sup)


def stability_conditions(p, mu, eps):
    """Evaluate the three sufficient conditions on ``mu`` for a parity polynomial.

    Returns a dict with booleans ``a``, ``b``, ``c`` and the numbers behind them.
    """
    d = _half_degree(p)
    out = {"mu": mu, "half_degree": d}
    if d == 0:
        out.update(a=True, b=True, c=True, c_ratios=[])
        return out
    if p.parity == "odd":
        coeffs = p.odd_coeffs()
        sum_abs = float(np.sum(np.abs(coeffs)))
        base = ChebPoly(coeffs)
        ratios = []
        for k in range(d + 1):
            sup = clenshaw_iterate_poly(base, k).sup_norm()
            ratios.append(mu * sup / ((d - k + 1) / d**2))
    else:
        at = even_tilde_coeffs(p.even_coeffs())
        sum_abs = float(np.sum(np.abs(at)))
        shifted = ChebPoly(np.append(at[1:], 0.0))
        xg = chebyshev_grid(8 * (2 * d + 2))
        y = 2 * xg * xg - 1
        ratios = []
        for k in range(d + 1):
            qk = clenshaw_iterate_poly(shifted, k) if k < shifted.coeffs.size else ChebPoly([0.0])
            sup = float(np.max(np.abs(4 * xg * cheb_eval_direct(qk, y))))
            ratios.append(mu * sup / ((d - k + 1) / d**2))
    out.update(
        a=mu * eps <= 1.0 / (100.0 * d * d),
        b=mu * sum_abs <= 1.0,
        c=max(ratios) <= 1.0,
        sum_abs=sum_abs,
        c_ratios=ratios,
    )
    return out


@dataclass
class SvtOutput:
    """Implicit description of ``y``.

    ``side="left"``: ``y = A x``.  ``side="right"``: ``y = A^dagger x + eta b``.
    ``x`` is stored sparsely as sorted ``x_indices`` with ``x_values``.
    """

    side: str
    x_indices: np.ndarray
    x_values: np.ndarray
    eta: complex
    A: SqMatrix
    b: SqVector | None
    iterate_norms: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    _bound: object = field(default=None, repr=False)
    _norm_sq: float | None = field(default=None, repr=False)

    @property
    def dim(self):
        return self.A.shape[0] if self.side == "left" else self.A.shape[1]

    @property
    def x_nnz(self):
        return int(self.x_indices.size)

    def x_dense(self):
        n = self.A.shape[1] if self.side == "left" else self.A.shape[0]
        out = np.zeros(n, dtype=np.result_type(self.x_values.dtype, float))
        out[self.x_indices] = self.x_values
        return out

    def to_dense(self):
        """Dense ``y`` (test and reporting helper)."""
        Asp = self.A.to_scipy()
        if self.side == "left":
            return Asp @ self.x_dense()
        y = Asp.conj().T @ self.x_dense()
        if self.b is not None and self.eta != 0:
            y = y + self.eta * self.b.to_dense()
        return y

    def bound(self):
        if self._bound is None:
            if self.side == "left":
                self._bound = _RowMixtureBound(self.A.adjoint(), self.x_indices, self.x_values, None, 0.0)
            else:
                self._bound = _RowMixtureBound(self.A, self.x_indices, self.x_values, self.b, self.eta)
        return self._bound

    def entry(self, i):
        return output_entry(self, i)


def _sparse(idx, vals):
    vals = np.asarray(vals)
    keep = vals != 0
    return np.asarray(idx, dtype=np.int64)[keep], vals[keep]


def _merge_sparse(*pairs):
    idx = np.concatenate([np.asarray(p[0], dtype=np.int64) for p in pairs])
    vals = np.concatenate([np.asarray(p[1]) for p in pairs])
    uniq, inv = np.unique(idx, return_inverse=True)
    return _sparse(uniq, _bincount(inv, vals, uniq.size))


def spectral_norm_check(A, iterations=100, rng=None, tol=1e-10):
    """Power-iteration estimate of the largest singular value."""
    if isinstance(A, SqMatrix):
        M = A.to_scipy()
    elif sp.issparse(A):
        M = A.tocsr()
    else:
        M = np.asarray(A)
    if min(M.shape) == 0:
        return 0.0
    rng = as_generator(rng)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        w = M.conj().T @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        new = math.sqrt(nw)
        v = w / nw
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return float(est)


def _resolve(p, A, params, n_log):
    mu = params.mu if params.mu is not None else default_mu(p)
    if params.exact:
        return mu, None, None, None
    d = max(_half_degree(p), 1)
    fro = A.frobenius_norm_sq
    dprime = params.delta / 3.0
    base = math.ceil(params.c1 * fro * math.log(max(n_log, 2) / dprime) / (mu * params.eps) ** 2)
    s = int(params.s) if params.s is not None else max(1, base)
    t = int(params.t) if params.t is not None else max(1, base)
    r = int(params.r) if params.r is not None else max(1, math.ceil(params.c2 * d**4 * fro * (s + t)))
    if s * t > params.max_dense_entries:
        raise ValueError(
            f"sketch sizes s={s}, t={t} need a {s}x{t} dense product; "
            "pass smaller explicit s and t"
        )
    return mu, s, t, r


def _prepare(A, b, p, parity, params):
    A = build_sq_matrix(A)
    if not isinstance(p, ChebPoly):
        p = ChebPoly(p)
    if p.parity != parity:
        raise ParityError(f"expected an {parity} polynomial, got {p.parity}")
    bvec = build_sq_vector(b)
    if len(bvec) != A.shape[1]:
        raise ValueError(f"b has length {len(bvec)}, expected {A.shape[1]}")
    if bvec.squared_norm <= 0:
        raise ZeroNormError("b has zero norm")
    params = params or SvtParams()
    return A, bvec, p, params


def _diagnostics(p, mu, params):
    cond = stability_conditions(p, mu, params.eps)
    if params.check_stability and not cond["a"]:
        raise ValueError("mu * eps exceeds 1/(100 d^2)")
    return {"mu": mu, "conditions": {k: cond[k] for k in ("a", "b", "c")}}


def _warn_norm(est, tol, what):
    if est > 1.0 + tol:
        warnings.warn(f"{what} spectral norm estimate {est:.4g} exceeds 1", RuntimeWarning, stacklevel=3)


def _sample_rows_by_norm(row_sq, size, rng):
    total = row_sq.sum()
    if total <= 0:
        raise ZeroNormError("zero-norm distribution")
    return sample_aamp(row_sq / total, size, rng)


def odd_svt(A, b, p, params=None, rng=None):
    """Sparse ``x`` with ``A x ~ p(A) b`` for an odd polynomial ``p``.

    Parameters
    ----------
    A : SqMatrix or matrix-like, shape (m, n)
    b : vector-like, length n
    p : ChebPoly
        Odd, degree ``2d + 1``.
    params : SvtParams
    rng : seed or Generator

    Returns
    -------
    SvtOutput
        ``side="left"``.
    """
    A, bvec, p, params = _prepare(A, b, p, "odd", params)
    rng = as_generator(rng)
    c = p.odd_coeffs()
    D = c.size - 1
    m, n = A.shape
    mu, s, t, r = _resolve(p, A, params, n)
    diag = _diagnostics(p, mu, params)
    norms, iter_times = [], []
    t0 = time.perf_counter()
    if params.exact:
        Asp = A.to_scipy()
        AH = Asp.conj().T.tocsr()
        if params.check_norm:
            est = spectral_norm_check(Asp, rng=rng)
            diag["norm_estimate"] = est
            _warn_norm(est, 1e-6, "A")
        bd = bvec.to_dense()
        pre = time.perf_counter() - t0
        w1 = np.zeros(n, dtype=np.result_type(Asp.dtype, bd.dtype))
        w2 = np.zeros_like(w1)
        for k in range(D, -1, -1):
            ti = time.perf_counter()
            w = 2.0 * (2.0 * (AH @ (Asp @ w1)) - w1) - w2 + 2.0 * c[k] * bd
            w2, w1 = w1, w
            norms.append(float(np.linalg.norm(w)))
            iter_times.append(time.perf_counter() - ti)
        x_idx, x_vals = _sparse(np.arange(n), 0.5 * (w1 - w2))
    else:
        colsq = A.column_norms_sq()
        bd = bvec.to_dense()
        probs = 0.5 * (colsq / A.frobenius_norm_sq + np.abs(bd) ** 2 / bvec.squared_norm)
        probs /= probs.sum()
        S = sample_aamp(probs, s, rng)
        AS = aamp_columns_sparse(A, S).tocsr()
        row_sq = np.asarray(abs(AS).power(2).sum(axis=1)).ravel()
        T = _sample_rows_by_norm(row_sq, t, rng)
        TAS = AS[T.indices].toarray() * T.scalings[:, None]
        sketch = build_sq_matrix(TAS)
        Sb = bvec.query(S.indices) * S.scalings
        if params.check_norm:
            est = spectral_norm_check(TAS, rng=rng)
            diag["norm_estimate"] = est
            _warn_norm(est, 0.25, "sketched TAS")
        pre = time.perf_counter() - t0
        v1 = np.zeros(s, dtype=np.result_type(TAS.dtype, Sb.dtype))
        v2 = np.zeros_like(v1)
        B = Bd = None
        for k in range(D, -1, -1):
            ti = time.perf_counter()
            if B is None or not params.reuse_best:
                B = sample_best(sketch, r, rng, merge=False)
                Bd = sample_best(sketch, r, rng, adjoint=True, merge=False)
            v = 2.0 * (2.0 * Bd.matvec(B.matvec(v1)) - v1) - v2 + 2.0 * c[k] * Sb
            v2, v1 = v1, v
            norms.append(float(np.linalg.norm(v)))
            iter_times.append(time.perf_counter() - ti)
        x_idx, x_vals = _sparse(*S.apply(0.5 * (v1 - v2)))
        diag.update(s=s, t=t, r=r)
    return SvtOutput(
        side="left", x_indices=x_idx, x_values=x_vals, eta=0.0, A=A, b=bvec,
        iterate_norms=norms[::-1],
        timings={"preprocess_s": pre, "per_iter_s": iter_times},
        diagnostics=diag,
    )


def even_svt(A, b, p, params=None, rng=None):
    """Sparse ``x`` and ``eta`` with ``A^dagger x + eta b ~ p(A) b`` for an even ``p``.

    Returns
    -------
    SvtOutput
        ``side="right"``, ``eta = a~_0 = p(0)``.
    """
    A, bvec, p, params = _prepare(A, b, p, "even", params)
    rng = as_generator(rng)
    at = even_tilde_coeffs(p.even_coeffs())
    D = at.size - 1
    m, n = A.shape
    mu, s, t, r = _resolve(p, A, params, n)
    diag = _diagnostics(p, mu, params)
    norms, iter_times = [], []
    t0 = time.perf_counter()
    if params.exact:
        Asp = A.to_scipy()
        AH = Asp.conj().T.tocsr()
        if params.check_norm:
            est = spectral_norm_check(Asp, rng=rng)
            diag["norm_estimate"] = est
            _warn_norm(est, 1e-6, "A")
        Ab = Asp @ bvec.to_dense()
        pre = time.perf_counter() - t0
        v1 = np.zeros(m, dtype=Ab.dtype)
        v2 = np.zeros_like(v1)
        for k in range(D - 1, -1, -1):
            ti = time.perf_counter()
            v = 2.0 * (2.0 * (Asp @ (AH @ v1)) - v1) - v2 + 4.0 * at[k + 1] * Ab
            v2, v1 = v1, v
            norms.append(float(np.linalg.norm(v)))
            iter_times.append(time.perf_counter() - ti)
        x_idx, x_vals = _sparse(np.arange(m), 0.5 * (v1 - v2))
    else:
        S = _sample_rows_by_norm(A._row_sq, s, rng)
        slot, cols, vals = A.gather_rows(S.indices)
        SA = sp.csc_matrix((vals * S.scalings[slot], (slot, cols)), shape=(s, n))
        colsq = np.bincount(cols, weights=np.abs(vals * S.scalings[slot]) ** 2, minlength=n)
        bd = bvec.to_dense()
        probs = 0.5 * (colsq / colsq.sum() + np.abs(bd) ** 2 / bvec.squared_norm)
        probs /= probs.sum()
        T = sample_aamp(probs, t, rng)
        SAT = SA[:, T.indices].toarray() * T.scalings[None, :]
        sketch = build_sq_matrix(SAT)
        Tb = bvec.query(T.indices) * T.scalings
        if params.check_norm:
            est = spectral_norm_check(SAT, rng=rng)
            diag["norm_estimate"] = est
            _warn_norm(est, 0.25, "sketched SAT")
        pre = time.perf_counter() - t0
        v1 = np.zeros(s, dtype=np.result_type(SAT.dtype, Tb.dtype))
        v2 = np.zeros_like(v1)
        B = Bd = None
        for k in range(D - 1, -1, -1):
            ti = time.perf_counter()
            if B is None or not params.reuse_best:
                B = sample_best(sketch, r, rng, merge=False)
                Bd = sample_best(sketch, r, rng, adjoint=True, merge=False)
            v = 2.0 * (2.0 * B.matvec(Bd.matvec(v1)) - v1) - v2 + 4.0 * at[k + 1] * B.matvec(Tb)
            v2, v1 = v1, v
            norms.append(float(np.linalg.norm(v)))
            iter_times.append(time.perf_counter() - ti)
        x_idx, x_vals = _sparse(*S.apply(0.5 * (v1 - v2)))
        diag.update(s=s, t=t, r=r)
    return SvtOutput(
        side="right", x_indices=x_idx, x_values=x_vals, eta=float(at[0]), A=A, b=bvec,
        iterate_norms=norms[::-1],
        timings={"preprocess_s": pre, "per_iter_s": iter_times},
        diagnostics=diag,
    )


def hermitian_svt(H, b, p, params=None, rng=None):
    """``p(H) b`` for Hermitian ``H`` and any polynomial, via its even and odd parts.

    Returns a ``side="right"`` description ``H x + eta b``.
    """
    H = build_sq_matrix(H)
    if H.shape[0] != H.shape[1] or not H.is_hermitian(tol=1e-12):
        raise ValueError("H must be Hermitian")
    if not isinstance(p, ChebPoly):
        p = ChebPoly(p)
    a = p.coeffs
    rng = as_generator(rng)
    even = a.copy()
    even[1::2] = 0.0
    odd = a.copy()
    odd[0::2] = 0.0
    parts = []
    eta = 0.0
    diag, norms, timings = {}, {}, {}
    bvec = build_sq_vector(b)
    if np.any(even):
        out_e = even_svt(H, bvec, ChebPoly(even, "even"), params, rng)
        parts.append((out_e.x_indices, out_e.x_values))
        eta = out_e.eta
        diag["even"], norms["even"], timings["even"] = out_e.diagnostics, out_e.iterate_norms, out_e.timings
    if np.any(odd):
        out_o = odd_svt(H, bvec, ChebPoly(odd, "odd"), params, rng)
        parts.append((out_o.x_indices, out_o.x_values))
        diag["odd"], norms["odd"], timings["odd"] = out_o.diagnostics, out_o.iterate_norms, out_o.timings
    x_idx, x_vals = _merge_sparse(*parts) if parts else (np.zeros(0, np.int64), np.zeros(0))
    return SvtOutput(side="right", x_indices=x_idx, x_values=x_vals, eta=eta, A=H, b=bvec,
                     iterate_norms=norms, timings=timings, diagnostics=diag)


def exact_matrix_clenshaw_hermitian(A, b, p):
    """``p(A) b`` by ``u_k = 2 A u_{k+1} - u_{k+2} + a_k b``, output ``(a_0 b + u_0 - u_2) / 2``."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    a = p.coeffs if isinstance(p, ChebPoly) else np.asarray(p, dtype=float)
    b = np.asarray(b)
    u = [np.zeros(b.shape, dtype=np.result_type(A.dtype, b.dtype)) for _ in range(a.size + 2)]
    for k in range(a.size - 1, -1, -1):
        u[k] = 2.0 * (A @ u[k + 1]) - u[k + 2] + a[k] * b
    return 0.5 * (a[0] * b + u[0] - u[2])


# ---------------------------------------------------------------------------
# access to outputs
# ---------------------------------------------------------------------------


def output_entry(o, i):
    """Entry ``y_i`` (scalar or array of indices) in ``O(||x||_0)`` queries."""
    idx = np.asarray(i, dtype=np.int64)
    if np.any((idx < 0) | (idx >= o.dim)):
        raise IndexError("index out of range")
    vals = o.bound().value(idx.ravel())
    return vals.reshape(idx.shape) if idx.ndim else vals[0]


def _oversampled(o, nu=0.5, delta=0.01, rng=None):
    bound = o.bound()
    if o._norm_sq is None:
        o._norm_sq = _stopping_rule_norm(bound.value, bound, nu, delta, as_generator(rng))
    phi = max(bound.squared_norm / o._norm_sq, 1.0) if o._norm_sq > 0 else math.inf
    return OversampledVector(n=o.dim, query=bound.value, bound=bound, phi=phi,
                             squared_norm=o._norm_sq)


def output_sample(o, delta=0.01, rng=None, size=None):
    """Indices ``i`` with probability ``|y_i|^2 / ||y||^2`` by rejection sampling.

    The oversampling factor used for the attempt budget comes from a coarse
    (factor-two) norm estimate cached on the output.
    """
    rng = as_generator(rng)
    ov = _oversampled(o, rng=rng)
    # the norm estimate may be low by up to a factor (1 + nu); widen the budget accordingly
    ov.phi *= 1.5
    return oversample_to_sample(ov, delta, rng, size=size)


def output_norm(o, nu=0.1, delta=0.1, rng=None):
    """Estimate of ``||y||^2`` to relative error ``nu`` with probability ``1 - delta``."""
    bound = o.bound()
    if bound.squared_norm <= 0:
        return 0.0
    return _stopping_rule_norm(bound.value, bound, nu, delta, as_generator(rng))
