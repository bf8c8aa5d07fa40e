"""scikit-learn style wrappers around the sketched SVT routines.

The matrix plays the role of the training data: ``fit`` builds the sampling
structure (and, for the regressor, solves), later calls reuse it.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .apps import recommend, regress
from .chebyshev import ChebPoly
from .svt import SvtParams, even_svt, odd_svt, output_sample, spectral_norm_check
from .sq_access import build_sq_matrix, build_sq_vector
from .validation import as_generator

__all__ = ["SingularValueTransformer", "QuantumInspiredRegressor", "ThresholdRecommender"]


def _params(est):
    return SvtParams(eps=est.eps, delta=est.delta, s=est.s, t=est.t, r=est.r,
                     mu=getattr(est, "mu", None), exact=est.exact)


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class SingularValueTransformer(BaseEstimator):
    """Apply ``p(A)`` to vectors through the odd or even sketched pipeline.

    ``fit(A)`` stores SQ access to ``A``; ``transform(b)`` returns the dense
    vector ``y`` and keeps the implicit description in ``output_``.
    """

    def __init__(self, poly=None, eps=0.1, delta=0.1, s=None, t=None, r=None, mu=None,
                 exact=False, random_state=None):
        self.poly = poly
        self.eps = eps
        self.delta = delta
        self.s = s
        self.t = t
        self.r = r
        self.mu = mu
        self.exact = exact
        self.random_state = random_state

    def fit(self, A, y=None):
        p = self.poly if isinstance(self.poly, ChebPoly) else ChebPoly(self.poly)
        if p.parity not in ("odd", "even"):
            raise ValueError("poly must be even or odd")
        self.poly_ = p
        self.matrix_ = build_sq_matrix(A)
        self.n_features_in_ = self.matrix_.shape[1]
        self._rng = as_generator(self.random_state)
        return self

    def describe(self, b):
        """Implicit description (an ``SvtOutput``) of ``p(A) b``."""
        _check_fitted(self, "matrix_")
        fn = odd_svt if self.poly_.parity == "odd" else even_svt
        self.output_ = fn(self.matrix_, build_sq_vector(b), self.poly_, _params(self), self._rng)
        return self.output_

    def transform(self, b):
        return self.describe(b).to_dense()

    def sample(self, size, delta=0.01):
        """``l2^2`` samples from the last output."""
        _check_fitted(self, "output_")
        return output_sample(self.output_, delta=delta, rng=self._rng, size=size)


class QuantumInspiredRegressor(RegressorMixin, BaseEstimator):
    """Least squares restricted to singular values at least ``sigma``.

    ``fit(X, y)`` approximates ``coef_ ~ X^+_{>=sigma} y``.  With
    ``normalize=True`` the inputs are rescaled to ``||X|| <= 1`` and
    ``||y|| = 1`` first (``sigma`` is then relative to ``||X||``).
    """

    def __init__(self, sigma=0.5, eps=0.1, delta=0.1, s=None, t=None, r=None, exact=False,
                 normalize=True, random_state=None):
        self.sigma = sigma
        self.eps = eps
        self.delta = delta
        self.s = s
        self.t = t
        self.r = r
        self.exact = exact
        self.normalize = normalize
        self.random_state = random_state

    def fit(self, X, y):
        A = build_sq_matrix(X)
        bvec = np.asarray(build_sq_vector(y).to_dense())
        a_scale = b_scale = 1.0
        if self.normalize:
            # a little headroom so power-iteration error cannot push ||A|| over one
            a_scale = spectral_norm_check(A, rng=0) * (1.0 + 1e-6)
            b_scale = float(np.linalg.norm(bvec))
        if a_scale == 0 or b_scale == 0:
            raise ValueError("X and y must be nonzero")
        As = build_sq_matrix(A.to_scipy() / a_scale) if a_scale != 1.0 else A
        res = regress(As, bvec / b_scale, self.sigma, self.eps, _params(self),
                      as_generator(self.random_state), oracle=False)
        self.result_ = res
        self.coef_ = res.output.to_dense() * (b_scale / a_scale)
        self.n_features_in_ = A.shape[1]
        return self

    def predict(self, X):
        _check_fitted(self, "coef_")
        X = X.to_scipy() if hasattr(X, "to_scipy") else X
        return np.real_if_close(X @ self.coef_)


class ThresholdRecommender(BaseEstimator):
    """Recommendations from the low-rank (thresholded) part of a preference matrix.

    ``fit(A)`` with ``||A|| <= 1``; ``recommend(i)`` describes the thresholded
    row ``i`` and ``sample_items(i, k)`` draws ``k`` items from it.
    """

    def __init__(self, sigma=0.5, eta=0.4, varsigma=0.1, eps=0.2, delta=0.1, s=None, t=None,
                 r=None, exact=False, random_state=None):
        self.sigma = sigma
        self.eta = eta
        self.varsigma = varsigma
        self.eps = eps
        self.delta = delta
        self.s = s
        self.t = t
        self.r = r
        self.exact = exact
        self.random_state = random_state

    def fit(self, A, y=None):
        self.matrix_ = build_sq_matrix(A)
        self.n_features_in_ = self.matrix_.shape[1]
        self._rng = as_generator(self.random_state)
        return self

    def recommend(self, i):
        _check_fitted(self, "matrix_")
        return recommend(self.matrix_, i, self.sigma, self.eps, eta=self.eta,
                         varsigma=self.varsigma, params=_params(self), rng=self._rng,
                         oracle=False).output

    def sample_items(self, i, k=1, delta=0.01):
        return output_sample(self.recommend(i), delta=delta, rng=self._rng, size=k)
