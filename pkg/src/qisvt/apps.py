"""Regression, recommendation and Hamiltonian simulation on top of the SVT routines."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ZeroNormError
from .polyapprox import inverse_poly, threshold_poly, trig_polys
from .reference import dense_expm_sym, dense_svd, svt_oracle_svd
from .sq_access import build_sq_matrix, build_sq_vector
from .svt import SvtOutput, SvtParams, _merge_sparse, even_svt, odd_svt
from .validation import as_generator, check_positive

__all__ = ["AppResult", "regress", "recommend", "hamsim"]

DENSE_LIMIT = 10_000_000


@dataclass
class AppResult:
    """Output description plus residuals against dense oracles (when affordable).

    ``output`` describes the answer ``y``; ``residual`` is ``||y - y_oracle||``
    with the oracle applying the same polynomial exactly; ``target`` is the
    residual the application promises; ``ideal_gap`` compares the oracle with
    the idealized (non-polynomial) answer.
    """

    name: str
    output: SvtOutput
    residual: float | None
    target: float
    ideal_gap: float | None = None
    params: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict)

    @property
    def success(self):
        return self.residual is not None and self.residual <= self.target


def _scale_down(p):
    """Rescale ``p`` to sup-norm at most one; return the polynomial and the factor undone later."""
    sup = p.sup_norm()
    if sup <= 1.0:
        return p, 1.0
    return p.scaled(1.0 / sup), sup


def _run(fn, A, b, p, eps, params, rng):
    ps, scale = _scale_down(p)
    base = params or SvtParams()
    out = fn(A, b, ps, replace(base, eps=min(eps / scale, 0.999)), rng)
    return replace(out, x_values=out.x_values * scale, eta=out.eta * scale, _bound=None, _norm_sq=None), scale


def regress(A, b, sigma, eps, params=None, rng=None, oracle=True):
    """Implicit ``y ~ g(A^dagger) b`` with ``g ~ 1/x`` on singular values ``>= sigma``.

    ``A`` is ``m x n`` and ``b`` has length ``m``; the returned description is
    ``y = A^dagger x``.
    """
    A = build_sq_matrix(A)
    check_positive("sigma", sigma)
    if not sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    rng = as_generator(rng)
    spec = inverse_poly(1.0 / sigma, eps)
    g = spec.poly
    out, scale = _run(odd_svt, A.adjoint(), b, g, eps, params, rng)
    # odd_svt on A^dagger gives y = A^dagger x, i.e. a right-side description of A
    desc = SvtOutput(side="right", x_indices=out.x_indices, x_values=out.x_values, eta=0.0,
                     A=A, b=None, iterate_norms=out.iterate_norms, timings=out.timings,
                     diagnostics=out.diagnostics)
    residual = gap = None
    if oracle and A.shape[0] * A.shape[1] <= DENSE_LIMIT:
        Ad = A.to_dense()
        bd = np.asarray(build_sq_vector(b).to_dense())
        want = svt_oracle_svd(np.conj(Ad).T, bd, g)
        residual = float(np.linalg.norm(desc.to_dense() - want))
        U, s, V = dense_svd(Ad)
        inv = np.where(s >= sigma, 1.0 / np.where(s > 0, s, 1.0), 0.0)
        ideal = V @ (inv * (np.conj(U).T @ bd))
        gap = float(np.linalg.norm(want - ideal))
    return AppResult("regress", desc, residual, eps, gap,
                     {"sigma": sigma, "eps": eps, "degree": g.degree, "scale": scale,
                      "poly": spec.report})


def recommend(A, i, sigma, eps, eta=0.4, varsigma=0.1, params=None, rng=None, oracle=True):
    """Implicit ``r ~ A^dagger q(A A^dagger) e_i``, a thresholded version of row ``i``.

    Runs the even routine on ``A^dagger`` with ``b = e_i`` to describe
    ``z = A x' + eta e_i`` and returns ``r = A^dagger z`` as a right-side
    description of ``A``.  ``eps`` is relative to ``||A_{i,*}||``.
    """
    A = build_sq_matrix(A)
    m, n = A.shape
    if not 0 <= i < m:
        raise IndexError("row index out of range")
    row_norm = float(np.sqrt(A.row_norm_sq(i)))
    if row_norm == 0:
        raise ZeroNormError(f"row {i} is zero")
    rng = as_generator(rng)
    spec = threshold_poly(sigma, eta, varsigma)
    p = spec.poly
    e_i = build_sq_vector((np.array([i]), np.array([1.0])), n=m)
    target = eps * row_norm
    out, scale = _run(even_svt, A.adjoint(), e_i, p, target, params, rng)
    # z = A x' + eta e_i, assembled from columns of A
    slot, rows, vals = A.adjoint().gather_rows(out.x_indices)
    z_idx, z_vals = _merge_sparse((rows, np.conj(vals) * out.x_values[slot]),
                                  (np.array([i]), np.array([out.eta])))
    desc = SvtOutput(side="right", x_indices=z_idx, x_values=z_vals, eta=0.0, A=A, b=None,
                     iterate_norms=out.iterate_norms, timings=out.timings,
                     diagnostics=out.diagnostics)
    residual = gap = None
    if oracle and m * n <= DENSE_LIMIT:
        Ad = A.to_dense()
        ed = np.zeros(m)
        ed[i] = 1.0
        want = np.conj(Ad).T @ svt_oracle_svd(np.conj(Ad).T, ed, p)
        residual = float(np.linalg.norm(desc.to_dense() - want))
        U, s, V = dense_svd(Ad)
        keep = s >= sigma
        ideal = V[:, keep] @ (s[keep] * np.conj(U[i, keep]))
        gap = float(np.linalg.norm(want - ideal))
    return AppResult("recommend", desc, residual, target, gap,
                     {"row": i, "sigma": sigma, "eta": eta, "varsigma": varsigma, "eps": eps,
                      "row_norm": row_norm, "degree": p.degree, "scale": scale})


def hamsim(H, b, t, eps, params=None, rng=None, oracle=True):
    """Implicit ``v ~ exp(i t H) b`` for Hermitian ``H`` with ``||H|| <= 1``.

    Polynomial error ``eps/2`` and sketch error ``eps/2`` are allotted to each
    of the cosine and sine branches, so the promised residual is ``2 eps ||b||``.
    """
    H = build_sq_matrix(H)
    if H.shape[0] != H.shape[1] or not H.is_hermitian(tol=1e-12):
        raise ValueError("H must be symmetric (Hermitian)")
    rng = as_generator(rng)
    bvec = build_sq_vector(b)
    cos_spec, sin_spec = trig_polys(t, eps / 2.0)
    bnorm = bvec.norm
    parts = {}
    pieces = []
    eta = 0.0
    if np.any(cos_spec.poly.coeffs):
        oc, _ = _run(even_svt, H, bvec, cos_spec.poly, eps / 2.0, params, rng)
        pieces.append((oc.x_indices, oc.x_values.astype(complex)))
        eta = oc.eta
        parts["cos"] = oc
    if np.any(sin_spec.poly.coeffs):
        os_, _ = _run(odd_svt, H, bvec, sin_spec.poly, eps / 2.0, params, rng)
        # y_s = H x_s and H = H^dagger, so i * y_s = H^dagger (i x_s)
        pieces.append((os_.x_indices, 1j * os_.x_values))
        parts["sin"] = os_
    x_idx, x_vals = _merge_sparse(*pieces)
    desc = SvtOutput(side="right", x_indices=x_idx, x_values=x_vals, eta=eta, A=H, b=bvec)
    residual = gap = None
    if oracle and H.shape[0] ** 2 <= DENSE_LIMIT:
        Hd = H.to_dense()
        bd = bvec.to_dense()
        exact = dense_expm_sym(Hd, t) @ bd
        residual = float(np.linalg.norm(desc.to_dense() - exact))
        lam, W = np.linalg.eigh(Hd)
        coef = np.conj(W).T @ bd
        pc = cos_spec.poly(lam)
        psn = sin_spec.poly(lam)
        poly_ans = W @ ((pc + 1j * psn) * coef)
        gap = float(np.linalg.norm(poly_ans - exact))
    return AppResult("hamsim", desc, residual, 2.0 * eps * bnorm, gap,
                     {"t": t, "eps": eps, "r": cos_spec.params["r"]}, parts)
