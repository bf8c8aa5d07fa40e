"""Dense reference computations used as test oracles and for residual reports.

The SVD is a one-sided (Hestenes) Jacobi iteration written here; the
symmetric eigendecomposition delegates to LAPACK through numpy.
"""

from __future__ import annotations

import numpy as np

from .chebyshev import ChebPoly, cheb_eval_direct
from .exceptions import ConvergenceError, ParityError

__all__ = [
    "dense_svd",
    "dense_eig_sym",
    "dense_expm_sym",
    "svt_oracle_svd",
    "dense_apply_poly",
    "dense_thresholded_row",
]


def _round_robin(n):
    """Rounds of disjoint column pairs covering every pair once (``n`` even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        rounds.append((np.array(players[:half]), np.array(players[half:][::-1])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _jacobi_columns(A, tol, max_sweeps):
    """Orthogonalize the columns of ``A`` (``m >= n``) by plane rotations.

    Returns ``(W, V)`` with ``A V = W`` and mutually orthogonal columns of ``W``.
    """
    m, n = A.shape
    W = A.astype(np.complex128 if np.iscomplexobj(A) else np.float64, copy=True)
    V = np.eye(n, dtype=W.dtype)
    if n % 2:
        W = np.hstack([W, np.zeros((m, 1), dtype=W.dtype)])
        V = np.pad(V, ((0, 1), (0, 1)))
    rounds = _round_robin(W.shape[1])
    for _ in range(max_sweeps):
        off = 0.0
        for I, J in rounds:
            wi, wj = W[:, I], W[:, J]
            alpha = np.sum(np.abs(wi) ** 2, axis=0)
            beta = np.sum(np.abs(wj) ** 2, axis=0)
            gamma = np.sum(np.conj(wi) * wj, axis=0)
            g = np.abs(gamma)
            denom = np.sqrt(alpha * beta)
            with np.errstate(invalid="ignore", divide="ignore"):
                rel = np.where(denom > 0, g / denom, 0.0)
            off = max(off, float(rel.max(initial=0.0)))
            act = rel > tol
            if not np.any(act):
                continue
            I, J = I[act], J[act]
            alpha, beta, gamma, g = alpha[act], beta[act], gamma[act], g[act]
            phase = gamma / g
            zeta = (beta - alpha) / (2.0 * g)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta**2))
            c = 1.0 / np.sqrt(1.0 + t**2)
            s = c * t
            for M in (W, V):
                mi = M[:, I]
                mj = M[:, J] * np.conj(phase)
                M[:, I] = c * mi - s * mj
                M[:, J] = s * mi + c * mj
        if off <= tol:
            break
    else:
        raise ConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    return W[:, :n], V[:n, :n]


def _complete_orthonormal(U, k, rng_seed=0):
    """Replace columns ``k:`` of ``U`` by an orthonormal completion."""
    m, r = U.shape
    if k >= r:
        return U
    rng = np.random.default_rng(rng_seed)
    R = rng.standard_normal((m, r - k)).astype(U.dtype)
    Q = U[:, :k]
    for _ in range(2):
        R = R - Q @ (np.conj(Q).T @ R)
    R, _ = np.linalg.qr(R)
    out = U.copy()
    out[:, k:] = R
    return out


def dense_svd(A, tol=1e-12, max_sweeps=100):
    """Thin SVD ``A = U diag(sigma) V^dagger`` with ``sigma`` descending.

    Returns ``(U, sigma, V)`` with ``min(m, n)`` columns each.
    """
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    m, n = A.shape
    if m < n:
        U, s, V = dense_svd(np.conj(A).T, tol, max_sweeps)
        return V, s, U
    W, V = _jacobi_columns(A, tol, max_sweeps)
    sigma = np.linalg.norm(W, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, W, V = sigma[order], W[:, order], V[:, order]
    scale = sigma[0] if sigma.size else 0.0
    nonzero = int(np.sum(sigma > scale * 1e-14)) if scale > 0 else 0
    U = np.zeros_like(W)
    U[:, :nonzero] = W[:, :nonzero] / sigma[:nonzero]
    sigma[nonzero:] = 0.0
    U = _complete_orthonormal(U, nonzero)
    return U, sigma, V


def dense_eig_sym(H):
    """Eigendecomposition ``H = W diag(lam) W^dagger`` of a Hermitian matrix."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(H, np.conj(H).T, atol=1e-12 * max(1.0, np.abs(H).max(initial=0.0))):
        raise ValueError("matrix is not Hermitian")
    return np.linalg.eigh(H)


def dense_expm_sym(H, t):
    """``exp(i t H)`` for Hermitian ``H``."""
    lam, W = dense_eig_sym(H)
    return (W * np.exp(1j * t * lam)) @ np.conj(W).T


def svt_oracle_svd(A, b, p):
    """Singular value transformation ``p(A) b`` from a dense SVD.

    Odd ``p``: ``sum_i p(sigma_i) u_i (v_i^dagger b)``.  Even ``p``:
    ``q(A^dagger A) b`` with ``p(x) = q(x^2)``, i.e. ``p(sigma_i)`` on the
    row space and ``p(0)`` on its orthogonal complement.
    """
    if not isinstance(p, ChebPoly):
        p = ChebPoly(p)
    A = np.asarray(A)
    b = np.asarray(b)
    U, sigma, V = dense_svd(A)
    coef = np.conj(V).T @ b
    ps = cheb_eval_direct(p, sigma)
    if p.parity == "odd":
        return U @ (ps * coef)
    if p.parity == "even":
        p0 = cheb_eval_direct(p, 0.0)
        return V @ (ps * coef) + p0 * (b - V @ coef)
    raise ParityError("singular value transformation needs an even or odd polynomial")


def dense_apply_poly(A, b, p):
    """Alias of :func:`svt_oracle_svd`."""
    return svt_oracle_svd(A, b, p)


def dense_thresholded_row(A, i, f):
    """Row ``i`` of ``A`` with singular values mapped through ``sigma * f(sigma)``.

    Returns ``sum_j f(sigma_j) sigma_j U_ij conj(v_j)`` as a length-``n``
    vector, the conjugate of the ``i``-th row of ``U diag(f(sigma) sigma) V^dagger``.
    """
    U, sigma, V = dense_svd(np.asarray(A))
    w = np.asarray(f(sigma)) * sigma * np.conj(U[i, :])
    return V @ w
