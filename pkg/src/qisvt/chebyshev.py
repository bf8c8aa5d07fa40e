"""Polynomials in the Chebyshev T basis.

Evaluation by the three-term recurrence and by Clenshaw's backward recurrence
(general, odd and even variants), an optional noisy-arithmetic mode for
stability experiments, Clenshaw iterates as polynomials, sup-norm estimates,
and coefficient progression sums with their known bounds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ParityError
from .validation import as_generator

__all__ = [
    "ChebPoly",
    "NoiseConfig",
    "cheb_eval_direct",
    "cheb_eval_clenshaw",
    "odd_clenshaw_scalar",
    "even_clenshaw_scalar",
    "even_tilde_coeffs",
    "clenshaw_iterate_poly",
    "coeff_progression_sum",
    "signed_odd_sum_bound",
    "step_four_sum_bound",
    "iterate_bound",
    "lebesgue_truncation_bound",
    "odd_sum_certificate",
    "supnorm_estimate",
    "chebyshev_grid",
    "random_bounded_poly",
]

PARITIES = ("even", "odd", "general")


def _infer_parity(a):
    if not np.any(a[1::2]):
        return "even"
    if not np.any(a[0::2]):
        return "odd"
    return "general"


class ChebPoly:
    """``p(x) = sum_k a_k T_k(x)`` with a parity tag.

    Parameters
    ----------
    coeffs : array_like
        ``a_0, ..., a_d``.
    parity : {"even", "odd", "general"}, optional
        Inferred from the coefficients when omitted.  A tag that contradicts
        the coefficients raises :class:`~qisvt.exceptions.ParityError`.
    """

    __slots__ = ("coeffs", "parity", "_sup")

    def __init__(self, coeffs, parity=None):
        a = np.array(coeffs, dtype=float).ravel()
        if a.size == 0:
            a = np.zeros(1)
        if not np.all(np.isfinite(a)):
            raise ValueError("coefficients must be finite")
        a.setflags(write=False)
        if parity is None:
            parity = _infer_parity(a)
        if parity not in PARITIES:
            raise ValueError(f"parity must be one of {PARITIES}")
        if parity == "odd" and np.any(a[0::2]):
            raise ParityError("odd polynomial has nonzero even coefficients")
        if parity == "even" and np.any(a[1::2]):
            raise ParityError("even polynomial has nonzero odd coefficients")
        self.coeffs = a
        self.parity = parity
        self._sup = None

    @classmethod
    def from_parity_coeffs(cls, coeffs, parity):
        """Build from compressed coefficients: ``a_1, a_3, ...`` (odd) or ``a_0, a_2, ...`` (even)."""
        c = np.asarray(coeffs, dtype=float).ravel()
        if parity == "odd":
            a = np.zeros(2 * c.size)
            a[1::2] = c
        elif parity == "even":
            a = np.zeros(max(1, 2 * c.size - 1))
            a[0::2] = c
        else:
            raise ValueError("parity must be 'odd' or 'even'")
        return cls(a, parity)

    @property
    def degree(self):
        return self.coeffs.size - 1

    def odd_coeffs(self):
        """``a_1, a_3, ..., a_d``."""
        return np.array(self.coeffs[1::2])

    def even_coeffs(self):
        """``a_0, a_2, ...``."""
        return np.array(self.coeffs[0::2])

    def __call__(self, x):
        return cheb_eval_direct(self, x)

    def __repr__(self):
        return f"ChebPoly(degree={self.degree}, parity={self.parity!r})"

    def __eq__(self, other):
        if not isinstance(other, ChebPoly):
            return NotImplemented
        return self.parity == other.parity and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.parity, self.coeffs.tobytes()))

    def sup_norm(self):
        """Grid estimate of ``max_{[-1,1]} |p|`` (cached)."""
        if self._sup is None:
            self._sup = supnorm_estimate(self)
        return self._sup

    def scaled(self, factor):
        return ChebPoly(self.coeffs * factor, self.parity)

    def truncated(self, k):
        """``p_k = sum_{l <= k} a_l T_l`` (parity tag recomputed)."""
        return ChebPoly(self.coeffs[: k + 1])

    def to_json(self):
        return json.dumps({"coefficients": self.coeffs.tolist(), "parity": self.parity})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        if isinstance(obj, list):
            return cls(obj)
        return cls(obj["coefficients"], obj.get("parity"))


def _coeffs(p):
    return p.coeffs if isinstance(p, ChebPoly) else np.asarray(p, dtype=float).ravel()


# ---------------------------------------------------------------------------
# exact evaluation
# ---------------------------------------------------------------------------


def cheb_eval_direct(p, x):
    """Evaluate ``sum_k a_k T_k(x)`` by generating ``T_k`` with the three-term recurrence."""
    a = _coeffs(p)
    x = np.asarray(x, dtype=float)
    t_prev = np.ones_like(x)
    acc = a[0] * t_prev
    if a.size == 1:
        return acc if acc.ndim else float(acc)
    t_cur = x.copy()
    acc = acc + a[1] * t_cur
    for k in range(2, a.size):
        t_prev, t_cur = t_cur, 2.0 * x * t_cur - t_prev
        acc = acc + a[k] * t_cur
    return acc if acc.ndim else float(acc)


# ---------------------------------------------------------------------------
# noisy arithmetic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseConfig:
    """Per-operation relative error model for Clenshaw experiments.

    Each addition or subtraction returns ``x +- y + u * rel_error * (|x| + |y|)``
    and each multiplication returns ``x * y * (1 + u * rel_error)``, which is
    the largest perturbation the error model allows, scaled by ``u``.
    ``mode="worst-sign-random"`` draws ``u`` from {-1, +1};
    ``mode="uniform-random"`` draws it from [-1, 1]; ``mode="off"`` is exact.
    """

    rel_error: float = 0.0
    mode: str = "off"
    seed: int | None = None

    def __post_init__(self):
        if self.rel_error < 0:
            raise ValueError("rel_error must be nonnegative")
        if self.mode not in ("off", "worst-sign-random", "uniform-random"):
            raise ValueError(f"unknown noise mode {self.mode!r}")

    @property
    def active(self):
        return self.mode != "off" and self.rel_error > 0


class _Arith:
    def __init__(self, noise, shape, rng=None):
        self.noise = noise or NoiseConfig()
        self.shape = shape
        self.rng = as_generator(self.noise.seed if rng is None else rng)

    def _u(self):
        if self.noise.mode == "worst-sign-random":
            return self.rng.choice((-1.0, 1.0), size=self.shape)
        return self.rng.uniform(-1.0, 1.0, size=self.shape)

    def add(self, x, y):
        if not self.noise.active:
            return x + y
        return x + y + self._u() * self.noise.rel_error * (np.abs(x) + np.abs(y))

    def sub(self, x, y):
        if not self.noise.active:
            return x - y
        return x - y + self._u() * self.noise.rel_error * (np.abs(x) + np.abs(y))

    def mul(self, x, y):
        if not self.noise.active:
            return x * y
        return x * y * (1.0 + self._u() * self.noise.rel_error)


def _scalar_out(v, x):
    return float(v) if np.ndim(x) == 0 else v


def cheb_eval_clenshaw(p, x, noise=None, rng=None):
    """Clenshaw's recurrence ``q_k = 2x q_{k+1} - q_{k+2} + a_k``, output ``(a_0 + q_0 - q_2) / 2``.

    With noise the recurrence is evaluated as
    ``q_k = (2 * x) * q_{k+1} - (q_{k+2} - a_k)`` and the output as
    ``1/2 * ((a_0 + q_0) - q_2)``, every operation perturbed per ``noise``.
    ``x`` may be an array; noise is then drawn independently per entry.
    """
    return cheb_eval_clenshaw_iterates(p, x, noise, rng)[1]


def cheb_eval_clenshaw_iterates(p, x, noise=None, rng=None):
    """All Clenshaw iterates ``q_0 .. q_d`` at ``x`` and the output, from one sweep."""
    a = _coeffs(p)
    xa = np.asarray(x, dtype=float)
    ar = _Arith(noise, xa.shape, rng)
    d = a.size - 1
    qs = [None] * (d + 3)
    qs[d + 1] = np.zeros_like(xa)  # q_{d+1} = q_{d+2} = 0
    qs[d + 2] = np.zeros_like(xa)
    two_x = ar.mul(2.0, xa)
    for k in range(d, -1, -1):
        qs[k] = ar.sub(ar.mul(two_x, qs[k + 1]), ar.sub(qs[k + 2], a[k]))
    out = ar.mul(0.5, ar.sub(ar.add(a[0], qs[0]), qs[2]))
    return qs[: d + 1], _scalar_out(out, x)


def _check_parity(p, parity):
    a = _coeffs(p)
    wrong = a[0::2] if parity == "odd" else a[1::2]
    if np.any(wrong):
        raise ParityError(f"expected an {parity} polynomial")
    return a


def odd_clenshaw_scalar(p, x, noise=None, rng=None):
    """Odd Clenshaw: ``q_k = 2 T_2(x) q_{k+1} - q_{k+2} + a_{2k+1} U_1(x)``, output ``(q_0 - q_1) / 2``."""
    a = _check_parity(p, "odd")
    c = a[1::2]
    xa = np.asarray(x, dtype=float)
    ar = _Arith(noise, xa.shape, rng)
    t2 = ar.sub(ar.mul(2.0, ar.mul(xa, xa)), 1.0)
    two_t2 = ar.mul(2.0, t2)
    u1 = ar.mul(2.0, xa)
    q1 = np.zeros_like(xa)
    q2 = np.zeros_like(xa)
    for k in range(c.size - 1, -1, -1):
        qk = ar.sub(ar.mul(two_t2, q1), ar.sub(q2, ar.mul(c[k], u1)))
        q2, q1 = q1, qk
    out = ar.mul(0.5, ar.sub(q1, q2))
    return _scalar_out(out, x)


def even_tilde_coeffs(even_coeffs):
    """Alternating tail sums ``a~_{2k} = a_{2k} - a_{2k+2} + a_{2k+4} - ...``.

    Takes and returns compressed even coefficients ``(a_0, a_2, ...)``.
    """
    a = np.asarray(even_coeffs, dtype=float).ravel()
    out = np.empty_like(a)
    acc = 0.0
    for k in range(a.size - 1, -1, -1):
        acc = a[k] - acc
        out[k] = acc
    return out


def even_clenshaw_scalar(p, x, noise=None, rng=None):
    """Even Clenshaw: ``q_k = 2 T_2(x) q_{k+1} - q_{k+2} + a~_{2k+2} U_1(x)^2``, output ``a~_0 + (q_0 - q_1) / 2``."""
    a = _check_parity(p, "even")
    at = even_tilde_coeffs(a[0::2])
    xa = np.asarray(x, dtype=float)
    ar = _Arith(noise, xa.shape, rng)
    t2 = ar.sub(ar.mul(2.0, ar.mul(xa, xa)), 1.0)
    two_t2 = ar.mul(2.0, t2)
    u1 = ar.mul(2.0, xa)
    u1sq = ar.mul(u1, u1)
    q1 = np.zeros_like(xa)
    q2 = np.zeros_like(xa)
    for k in range(at.size - 2, -1, -1):
        qk = ar.sub(ar.mul(two_t2, q1), ar.sub(q2, ar.mul(at[k + 1], u1sq)))
        q2, q1 = q1, qk
    out = ar.add(at[0], ar.mul(0.5, ar.sub(q1, q2)))
    return _scalar_out(out, x)


# ---------------------------------------------------------------------------
# iterates, sums and bounds
# ---------------------------------------------------------------------------


def _step_tail_sums(a, step):
    """``S[i] = a[i] + a[i+step] + ...`` computed backward."""
    s = np.array(a, dtype=float)
    for i in range(s.size - 1 - step, -1, -1):
        s[i] += s[i + step]
    return s


def clenshaw_iterate_poly(p, k):
    """The Clenshaw iterate ``q_k = sum_{i=k}^d a_i U_{i-k}`` in the T basis.

    Uses ``U_n = sum_{j>=0} (2 - [n - 2j = 0]) T_{n-2j}``, so the coefficient of
    ``T_m`` is ``w_m sum_{j>=0} a_{k+m+2j}`` with ``w_0 = 1`` and ``w_m = 2``.
    """
    a = _coeffs(p)
    d = a.size - 1
    if not 0 <= k <= d:
        raise ValueError("iterate index must lie in [0, degree]")
    tail = _step_tail_sums(a[k:], 2)
    c = 2.0 * tail
    c[0] = tail[0]
    return ChebPoly(c)


def coeff_progression_sum(p, step=2, offset=0, sign_alternating=False, stop=None):
    """``sum_l s_l a_{offset + step*l}`` over indices ``<= stop`` (default: degree).

    ``s_l = (-1)^l`` when ``sign_alternating``, else 1.  Summed with
    :func:`math.fsum` so the result is correctly rounded.
    """
    a = _coeffs(p)
    if step < 1 or offset < 0:
        raise ValueError("step must be >= 1 and offset >= 0")
    last = a.size - 1 if stop is None else min(stop, a.size - 1)
    terms = a[offset: last + 1: step]
    if sign_alternating:
        terms = terms * np.where(np.arange(terms.size) % 2 == 0, 1.0, -1.0)
    return math.fsum(terms.tolist())


def signed_odd_sum_bound(degree):
    """``16 + 4 ln^2(n + 1)`` where ``n = (degree - 1) // 2`` indexes the last odd coefficient."""
    n = max((degree - 1) // 2, 0)
    return 16.0 + 4.0 * math.log(n + 1) ** 2


def step_four_sum_bound(degree):
    """``32 + 8 ln^2(d + 1)`` for progressions of step four in a degree-``d`` polynomial."""
    return 32.0 + 8.0 * math.log(degree + 1) ** 2


def iterate_bound(degree, k):
    """``(d - k + 1)(16 + 16/pi^2 log d)``: bound on ``||q_k|| / ||p||``."""
    return (degree - k + 1) * (16.0 + 16.0 / math.pi**2 * math.log(max(degree, 1)))


def lebesgue_truncation_bound(k):
    """``4 + 4/pi^2 log(k + 1)``: bound on ``||p - p_k|| / ||p||``."""
    return 4.0 + 4.0 / math.pi**2 * math.log(k + 1)


def odd_sum_certificate(d):
    """Solve the upper unitriangular system ``A c = 1`` with
    ``A_st = sin(pi/2 (2s+1)/(2t+1))`` by backward substitution.

    Returns ``c_0 .. c_d``; these are positive and sum to at most ``ln d + 2``.
    """
    if d < 0:
        raise ValueError("d must be nonnegative")
    c = np.empty(d + 1)
    t = np.arange(d + 1)
    for s in range(d, -1, -1):
        row = np.sin(0.5 * math.pi * (2 * s + 1) / (2 * t[s + 1:] + 1))
        c[s] = 1.0 - row @ c[s + 1:]
    return c


def odd_sum_certificate_residual(c):
    d = c.size - 1
    s = np.arange(d + 1)[:, None]
    t = np.arange(d + 1)[None, :]
    A = np.where(t >= s, np.sin(0.5 * np.pi * (2 * s + 1) / (2 * t + 1)), 0.0)
    return float(np.max(np.abs(A @ c - 1.0)))


def chebyshev_grid(n):
    """``n`` Chebyshev extreme points ``cos(pi j / (n-1))``, which include +-1."""
    if n < 2:
        return np.array([1.0])
    return np.cos(np.pi * np.arange(n) / (n - 1))


def supnorm_estimate(p, factor=8, refine=True):
    """``max |p(x)|`` over ``factor * (d + 1)`` Chebyshev extreme points.

    With ``refine`` the best grid points are then polished by two rounds of
    finer sampling in ``theta = arccos x`` between their neighbours, which
    brings the estimate within about 1e-6 relative of the true maximum.  The
    result is always attained at some point, so it never overestimates.
    """
    a = _coeffs(p)
    n = factor * a.size
    x = chebyshev_grid(n)
    vals = np.abs(cheb_eval_direct(a, x))
    best = float(np.max(vals))
    if not refine or n < 3 or best == 0.0:
        return best
    h = np.pi / (n - 1)
    top = np.argsort(vals)[-min(8, n):]
    theta = np.pi * top / (n - 1)
    for _ in range(2):
        offs = np.linspace(-h, h, 33)
        cand = np.clip(theta[:, None] + offs[None, :], 0.0, np.pi)
        v = np.abs(cheb_eval_direct(a, np.cos(cand)))
        k = np.argmax(v, axis=1)
        theta = cand[np.arange(theta.size), k]
        best = max(best, float(v.max()))
        h /= 16.0
    return best


def random_bounded_poly(degree, rng=None, parity="general"):
    """Gaussian Chebyshev coefficients rescaled to grid sup-norm one.

    ``parity`` zeroes the coefficients of the other parity; the leading
    coefficient is kept nonzero so the degree is exact.
    """
    rng = as_generator(rng)
    a = rng.standard_normal(degree + 1)
    if parity == "odd":
        if degree % 2 == 0:
            raise ParityError("odd polynomials have odd degree")
        a[0::2] = 0.0
    elif parity == "even":
        if degree % 2 == 1:
            raise ParityError("even polynomials have even degree")
        a[1::2] = 0.0
    elif parity != "general":
        raise ValueError(f"unknown parity {parity!r}")
    p = ChebPoly(a, parity if parity != "general" else None)
    return p.scaled(1.0 / supnorm_estimate(p))
