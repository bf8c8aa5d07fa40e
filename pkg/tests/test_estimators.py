import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from _instances import low_rank, recommend_instance, unit
from qisvt import ChebPoly, svt_oracle_svd
from qisvt.estimators import QuantumInspiredRegressor, SingularValueTransformer, ThresholdRecommender


def test_transformer_exact_matches_oracle():
    rng = np.random.default_rng(0)
    A = low_rank(rng, 25, 15, [0.9, 0.6])
    b = unit(rng, 15)
    p = ChebPoly([0.0, 0.5, 0.0, 0.4])
    est = SingularValueTransformer(poly=p, exact=True).fit(A)
    np.testing.assert_allclose(est.transform(b), svt_oracle_svd(A, b, p), atol=1e-10)
    assert est.n_features_in_ == 15
    assert est.output_.side == "left"


def test_transformer_accepts_coefficient_list_and_samples():
    rng = np.random.default_rng(1)
    A = low_rank(rng, 25, 15, [0.9, 0.6])
    est = SingularValueTransformer(poly=[0.3, 0.0, 0.5], s=60, t=60, r=3000, random_state=4).fit(A)
    y = est.transform(unit(rng, 15))
    assert y.shape == (15,)
    draws = est.sample(100)
    assert draws.shape == (100,) and draws.max() < 15


def test_transformer_unfitted_and_bad_parity():
    with pytest.raises(NotFittedError):
        SingularValueTransformer(poly=[0.0, 1.0]).transform(np.ones(3))
    with pytest.raises(ValueError):
        SingularValueTransformer(poly=[1.0, 1.0]).fit(np.eye(2))


def test_transformer_is_reproducible():
    rng = np.random.default_rng(2)
    A = low_rank(rng, 25, 15, [0.9, 0.6])
    b = unit(rng, 15)
    est = SingularValueTransformer(poly=[0.0, 0.8], s=40, t=40, r=2000, random_state=9)
    y1 = clone(est).fit(A).transform(b)
    y2 = clone(est).fit(A).transform(b)
    np.testing.assert_array_equal(y1, y2)
    assert est.get_params()["s"] == 40


def test_regressor_recovers_well_conditioned_solution():
    rng = np.random.default_rng(3)
    X = low_rank(rng, 40, 10, np.linspace(3.0, 1.5, 10))
    w = rng.standard_normal(10)
    y = X @ w
    est = QuantumInspiredRegressor(sigma=0.4, eps=0.02, exact=True).fit(X, y)
    assert np.linalg.norm(est.coef_ - w) <= 0.05 * np.linalg.norm(w)
    assert est.score(X, y) > 0.99


def test_regressor_without_normalization():
    rng = np.random.default_rng(4)
    X = low_rank(rng, 30, 8, np.linspace(0.9, 0.6, 8))
    w = rng.standard_normal(8)
    y = X @ w
    y /= np.linalg.norm(y)
    est = QuantumInspiredRegressor(sigma=0.5, eps=0.02, exact=True, normalize=False).fit(X, y)
    assert est.score(X, y) > 0.99


def test_regressor_sketched_runs():
    rng = np.random.default_rng(5)
    X = low_rank(rng, 40, 10, np.linspace(1.0, 0.6, 10))
    y = X @ rng.standard_normal(10)
    est = QuantumInspiredRegressor(sigma=0.5, eps=0.2, s=300, t=300, r=50_000, random_state=0).fit(X, y)
    assert est.predict(X).shape == (40,)
    with pytest.raises(NotFittedError):
        QuantumInspiredRegressor().predict(X)


def test_recommender_exact():
    A, i = recommend_instance(0)
    rec = ThresholdRecommender(sigma=0.5, eta=0.4, varsigma=0.1, exact=True).fit(A)
    r = rec.recommend(i).to_dense()
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s >= 0.5
    ideal = (U[i, keep] * s[keep]) @ Vt[keep]
    assert np.linalg.norm(r - ideal) <= 0.1 * np.linalg.norm(A[i])
    items = rec.sample_items(i, k=50)
    assert items.shape == (50,) and items.max() < A.shape[1]
