"""Bounded Chebyshev-basis polynomials used by the applications.

Every constructor checks its output on a dense grid and raises
:class:`~qisvt.exceptions.CertificationError` (carrying the report) when a
required property fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.fft import dct
from scipy.special import erf, gammaln, logsumexp

from .chebyshev import ChebPoly, cheb_eval_clenshaw, chebyshev_grid
from .exceptions import CertificationError

__all__ = [
    "ApproxSpec",
    "cheb_interpolate",
    "sign_poly",
    "threshold_poly",
    "inverse_poly",
    "bessel_j",
    "trig_polys",
    "coefficient_bound_ok",
]

_GRID = 10_000


@dataclass
class ApproxSpec:
    """A constructed polynomial together with its parameters and grid report."""

    kind: str
    params: dict
    poly: ChebPoly
    sup_norm: float
    report: dict = field(default_factory=dict)

    @property
    def certified(self):
        return bool(self.report.get("certified", False))


def cheb_interpolate(f, degree, parity=None):
    """Chebyshev interpolant of ``f`` at ``degree + 1`` first-kind Chebyshev points.

    Coefficients come from the discrete orthogonality of ``T_k`` at those
    points (a DCT-II).  ``parity`` zeroes the coefficients of the other parity.
    """
    n = degree + 1
    x = np.cos(np.pi * (np.arange(n) + 0.5) / n)
    c = dct(np.asarray(f(x), dtype=float), type=2) / n
    c[0] /= 2.0
    if parity == "odd":
        c[0::2] = 0.0
    elif parity == "even":
        c[1::2] = 0.0
    return ChebPoly(c, parity)


def coefficient_bound_ok(p, sup=None):
    """``|a_k| <= 2 ||p||_sup`` for every coefficient."""
    sup = p.sup_norm() if sup is None else sup
    return bool(np.all(np.abs(p.coeffs) <= 2.0 * sup * (1 + 1e-12) + 1e-15))


def _dense_grid(lo, hi, degree, extra=()):
    """Uniform grid plus scaled Chebyshev extreme points plus the ``extra`` points inside ``[lo, hi]``."""
    g = [np.linspace(lo, hi, _GRID)]
    ch = chebyshev_grid(max(20 * (degree + 1), 16))
    g.append(lo + (hi - lo) * (ch + 1) / 2)
    extra = np.asarray(extra, dtype=float)
    g.append(extra[(extra >= lo) & (extra <= hi)])
    return np.unique(np.concatenate(g))


# ---------------------------------------------------------------------------
# sign
# ---------------------------------------------------------------------------


def _erf_rate(delta, eps):
    return math.sqrt(2.0) / delta * math.sqrt(math.log(2.0 / (math.pi * eps**2)))


def _sign_on_wide(delta, eps, degree):
    """Odd polynomial ``G`` on ``[-1, 1]`` with ``G(x/2) ~ erf(k x)`` for ``|x| <= 2``."""
    k = _erf_rate(delta, eps)
    return cheb_interpolate(lambda y: erf(2.0 * k * y), degree, "odd")


def _check_sign(G, delta, eps):
    xs = _dense_grid(-2.0, 2.0, G.degree, extra=(-2, -delta, delta, 2))
    vals = cheb_eval_clenshaw(G, xs / 2.0)
    # the grid can miss the overshoot peak by ~1e-7; the refined estimate plus headroom does not
    peak = max(float(np.max(np.abs(vals))), G.sup_norm())
    scale = max(1.0, peak * (1.0 + 1e-7))
    vals = vals / scale
    band = np.abs(xs) >= delta
    err = float(np.max(np.abs(vals[band] - np.sign(xs[band]))))
    return scale, {"max_abs": peak / scale, "max_sign_error": err,
                   "certified": err <= eps and peak / scale <= 1.0 + 1e-12}


def _wide_to_unit(G, scale):
    """Re-express ``x -> G(x/2) / scale`` in the T basis on ``[-1, 1]`` (exact interpolation)."""
    return cheb_interpolate(lambda x: cheb_eval_clenshaw(G, x / 2.0) / scale, G.degree, G.parity)


def _sign_search(delta, eps, max_degree=20001):
    """Smallest odd degree (doubling, then bisection) whose interpolant certifies."""
    def attempt(deg):
        G = _sign_on_wide(delta, eps, deg)
        scale, rep = _check_sign(G, delta, eps)
        return G, scale, rep

    deg = max(3, int(math.ceil(math.log(1.0 / eps) / delta)) | 1)
    lo = 1
    while True:
        G, scale, rep = attempt(deg)
        if rep["certified"]:
            break
        lo = deg
        if deg >= max_degree:
            raise CertificationError(
                f"sign polynomial failed to certify up to degree {deg}: "
                f"worst error {rep['max_sign_error']:.3g}", rep)
        deg = min(2 * deg + 1, max_degree)
    hi = deg
    best = (G, scale, rep)
    while hi - lo > 2:
        mid = ((lo + hi) // 2) | 1
        if mid >= hi:
            mid = hi - 2
        if mid <= lo:
            break
        cand = attempt(mid)
        if cand[2]["certified"]:
            hi, best = mid, cand
        else:
            lo = mid
    return best


def sign_poly(delta, eps):
    """Odd polynomial with ``|p| <= 1`` on ``[-2, 2]`` and ``|p - sign| <= eps`` for ``delta <= |x| <= 2``.

    Built by interpolating ``erf(k x)`` with ``k = sqrt(2)/delta sqrt(log(2/(pi eps^2)))``
    at Chebyshev points of ``[-2, 2]``, rescaled so the grid maximum is at most 1.

    Returns
    -------
    ApproxSpec
        ``poly`` is expressed in ``T_k(x)`` on ``[-1, 1]``; ``report["wide"]``
        holds the ``[-2, 2]`` version as a polynomial in ``x/2``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    G, scale, rep = _sign_search(delta, eps)
    wide = G.scaled(1.0 / scale)
    p = _wide_to_unit(G, scale)
    rep = dict(rep, degree=p.degree, erf_rate=_erf_rate(delta, eps), wide=wide)
    return ApproxSpec("sign", {"delta": delta, "eps": eps}, p, p.sup_norm(), rep)


def _eval_wide(wide, y):
    """Evaluate the ``[-2, 2]`` sign polynomial at ``y``."""
    return cheb_eval_clenshaw(wide, np.asarray(y) / 2.0)


# ---------------------------------------------------------------------------
# threshold
# ---------------------------------------------------------------------------


def threshold_poly(sigma, eta, varsigma):
    """Even polynomial, ``[0, 1]``-valued, that is ``>= 1 - varsigma`` for
    ``|x| >= (1 + eta) sigma`` and ``<= varsigma`` for ``|x| <= (1 - eta) sigma``.

    ``p(x) = (1 - varsigma/2)(1 + (s(x - sigma) + s(-x - sigma)) / 2)`` with
    ``s`` the sign polynomial for gap ``eta sigma`` and error ``varsigma / 2``.
    """
    if not 0 < varsigma < 0.5 or not 0 < eta < 0.5:
        raise ValueError("varsigma and eta must lie in (0, 1/2)")
    if not 0 < sigma <= 1:
        raise ValueError("sigma must lie in (0, 1]")
    s = sign_poly(eta * sigma, varsigma / 2.0)
    wide = s.report["wide"]
    pref = 1.0 - varsigma / 2.0

    def f(x):
        return pref * (1.0 + (_eval_wide(wide, x - sigma) + _eval_wide(wide, -x - sigma)) / 2.0)

    p = cheb_interpolate(f, wide.degree + (wide.degree % 2), "even")
    xs = _dense_grid(-1.0, 1.0, p.degree,
                     extra=(0, (1 - eta) * sigma, (1 + eta) * sigma, -(1 - eta) * sigma, -(1 + eta) * sigma))
    vals = cheb_eval_clenshaw(p, xs)
    outer = np.abs(xs) >= (1 + eta) * sigma
    inner = np.abs(xs) <= (1 - eta) * sigma
    rep = {
        "min": float(vals.min()),
        "max": float(vals.max()),
        "outer_min": float(vals[outer].min()) if outer.any() else None,
        "inner_max": float(vals[inner].max()) if inner.any() else None,
        "even_defect": float(np.max(np.abs(vals - cheb_eval_clenshaw(p, -xs)))),
        "degree": p.degree,
    }
    ok = rep["min"] >= -1e-9 and rep["max"] <= 1 + 1e-9
    ok &= rep["outer_min"] is None or rep["outer_min"] >= 1 - varsigma
    ok &= rep["inner_max"] is None or rep["inner_max"] <= varsigma
    rep["certified"] = bool(ok)
    if not ok:
        raise CertificationError("threshold polynomial failed its band conditions", rep)
    return ApproxSpec("threshold", {"sigma": sigma, "eta": eta, "varsigma": varsigma},
                      p, p.sup_norm(), rep)


# ---------------------------------------------------------------------------
# inverse
# ---------------------------------------------------------------------------


def _inverse_coeffs(b, J):
    """``4 (-1)^j sum_{i=j+1}^b C(2b, b+i) / 4^b`` for ``j = 0..J``, in log space."""
    i = np.arange(1, b + 1)
    log_binom = gammaln(2 * b + 1) - gammaln(b + i + 1) - gammaln(b - i + 1) - 2 * b * math.log(2)
    # tails[j] = logsumexp(log_binom[j:]) for the terms i = j+1 .. b
    tails = np.full(J + 1, -np.inf)
    for j in range(min(J, b - 1) + 1):
        tails[j] = logsumexp(log_binom[j:])
    mags = np.exp(tails)
    return 4.0 * mags * np.where(np.arange(J + 1) % 2 == 0, 1.0, -1.0)


def inverse_poly(kappa, eps, normalization=1.0, b=None, max_rounds=20):
    """Odd polynomial ``g ~ 1/x`` on ``[1/kappa, 1]``.

    ``g = 4 sum_{j<=J} (-1)^j [sum_{i=j+1}^b C(2b, b+i) / 4^b] T_{2j+1}`` with
    ``b = ceil(kappa^2 log(kappa/eps))`` and ``J = ceil(sqrt(b log(4b/eps)))``.
    The grid report checks ``|g - (1 - (1 - x^2)^b)/x| <= eps`` on ``[-1, 1]``,
    ``|g - 1/x| <= eps`` on ``[1/kappa, 1]`` and ``|g| <= 4J``.  If the
    ``1/x`` check fails, ``b`` is increased by 25% and the construction retried.
    The returned polynomial is ``normalization * g``.
    """
    if not kappa > 1:
        raise ValueError("kappa must exceed 1")
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    b_cur = int(b) if b is not None else int(math.ceil(kappa**2 * math.log(kappa / eps)))
    for _ in range(max_rounds):
        J = int(math.ceil(math.sqrt(b_cur * math.log(4 * b_cur / eps))))
        c = _inverse_coeffs(b_cur, J)
        g = ChebPoly.from_parity_coeffs(c, "odd")
        xs = _dense_grid(-1.0, 1.0, g.degree, extra=(1.0 / kappa, 1.0))
        gv = cheb_eval_clenshaw(g, xs)
        with np.errstate(divide="ignore", invalid="ignore"):
            fv = np.where(xs != 0, (1.0 - (1.0 - xs**2) ** b_cur) / xs, 0.0)
        dom = xs >= 1.0 / kappa
        rep = {
            "b": b_cur,
            "J": J,
            "degree": g.degree,
            "err_vs_smooth": float(np.max(np.abs(gv - fv))),
            "err_vs_inverse": float(np.max(np.abs(gv[dom] - 1.0 / xs[dom]))),
            "max_abs": float(np.max(np.abs(gv))),
            "bound_4J": 4.0 * J,
        }
        rep["certified"] = bool(rep["err_vs_smooth"] <= eps and rep["err_vs_inverse"] <= eps
                                and rep["max_abs"] <= 4 * J)
        if rep["certified"]:
            p = g.scaled(normalization)
            rep["normalization"] = normalization
            return ApproxSpec("inverse", {"kappa": kappa, "eps": eps, "b": b_cur},
                              p, p.sup_norm(), rep)
        if b is not None:
            break
        b_cur = int(math.ceil(1.25 * b_cur))
    raise CertificationError("inverse polynomial failed to certify", rep)


# ---------------------------------------------------------------------------
# Bessel and trigonometric
# ---------------------------------------------------------------------------


def bessel_j(i, x):
    """Bessel function of the first kind ``J_i(x)`` from its power series.

    The series is summed in exact rational arithmetic (``x`` is converted to
    the exact rational value of the float), which removes the cancellation
    that plain floating point suffers for moderate ``|x|``.  Summation stops
    once terms are decreasing and below ``1e-18`` of the running sum.
    """
    if int(i) != i or i < 0:
        raise ValueError("order must be a nonnegative integer")
    i = int(i)
    if x == 0:
        return 1.0 if i == 0 else 0.0
    h = Fraction(float(x)) / 2
    h2 = h * h
    term = h**i / math.factorial(i)
    total = term
    m = 0
    while True:
        m += 1
        term = -term * h2 / (m * (m + i))
        total += term
        if m > abs(float(h)) and abs(term) <= Fraction(1, 10**18) * abs(total):
            break
        if m > 10_000:
            break
    return float(total)


def trig_polys(t, eps, max_rounds=50):
    """Even and odd polynomials approximating ``cos(t x)`` and ``sin(t x)`` on ``[-1, 1]``.

    ``cos(tx) ~ J_0(t) + 2 sum_{i=1}^r (-1)^i J_{2i}(t) T_{2i}(x)`` and
    ``sin(tx) ~ 2 sum_{i=0}^r (-1)^i J_{2i+1}(t) T_{2i+1}(x)``, starting from
    ``r = ceil(|t| + 2 log(1/eps) / max(1, log log(1/eps)))`` and increasing
    ``r`` until both pass the grid check.

    Returns
    -------
    (ApproxSpec, ApproxSpec)
    """
    if not 0 < eps < 1 / math.e:
        raise ValueError("eps must lie in (0, 1/e)")
    L = math.log(1.0 / eps)
    r = int(math.ceil(abs(t) + 2.0 * L / max(1.0, math.log(L))))
    for _ in range(max_rounds):
        jv = [bessel_j(k, t) for k in range(2 * r + 2)]
        ce = np.array([jv[0]] + [2.0 * (-1) ** i * jv[2 * i] for i in range(1, r + 1)])
        so = np.array([2.0 * (-1) ** i * jv[2 * i + 1] for i in range(r + 1)])
        pc = ChebPoly.from_parity_coeffs(ce, "even")
        ps = ChebPoly.from_parity_coeffs(so, "odd")
        xs = _dense_grid(-1.0, 1.0, 2 * r + 1)
        ec = float(np.max(np.abs(cheb_eval_clenshaw(pc, xs) - np.cos(t * xs))))
        es = float(np.max(np.abs(cheb_eval_clenshaw(ps, xs) - np.sin(t * xs))))
        if ec <= eps and es <= eps:
            params = {"t": t, "eps": eps, "r": r}
            return (
                ApproxSpec("cos", params, pc, pc.sup_norm(), {"max_error": ec, "certified": True, "r": r}),
                ApproxSpec("sin", params, ps, ps.sup_norm(), {"max_error": es, "certified": True, "r": r}),
            )
        r += max(1, r // 4)
    raise CertificationError("trigonometric polynomials failed to certify",
                             {"r": r, "cos_error": ec, "sin_error": es})
