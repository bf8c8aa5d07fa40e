import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _instances import low_rank, unit
from qisvt import (
    ChebPoly,
    ParityError,
    SvtParams,
    ZeroNormError,
    build_sq_matrix,
    even_svt,
    exact_matrix_clenshaw_hermitian,
    hermitian_svt,
    odd_svt,
    output_entry,
    output_norm,
    output_sample,
    random_bounded_poly,
    spectral_norm_check,
    svt_oracle_svd,
)
from qisvt.svt import SvtOutput, default_mu, stability_conditions

EXACT = SvtParams(exact=True)


def small_instance(seed, m=30, n=20):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    return A / (1.001 * np.linalg.norm(A, 2)), unit(rng, n), rng


# --- exact mode ------------------------------------------------------------


def test_exact_odd_matches_oracle():
    A, b, rng = small_instance(0)
    for deg in (1, 3, 7, 15):
        p = random_bounded_poly(deg, rng, parity="odd")
        out = odd_svt(A, b, p, EXACT)
        assert out.side == "left"
        assert np.linalg.norm(out.to_dense() - svt_oracle_svd(A, b, p)) <= 1e-8


def test_exact_odd_identity_polynomial():
    A, b, _ = small_instance(1)
    out = odd_svt(A, b, ChebPoly([0.0, 1.0]), EXACT)
    np.testing.assert_allclose(out.to_dense(), A @ b, atol=1e-12)


def test_exact_even_matches_oracle():
    A, b, rng = small_instance(2)
    for deg in (0, 2, 6, 12):
        p = random_bounded_poly(deg, rng, parity="even")
        out = even_svt(A, b, p, EXACT)
        assert out.side == "right"
        assert np.linalg.norm(out.to_dense() - svt_oracle_svd(A, b, p)) <= 1e-8


@pytest.mark.filterwarnings("ignore:sketched")
def test_even_constant_polynomial():
    A, b, _ = small_instance(3)
    for params in (EXACT, SvtParams(s=20, t=20, r=100)):
        out = even_svt(A, b, ChebPoly([0.4]), params, rng=0)
        assert out.eta == pytest.approx(0.4)
        assert out.x_nnz == 0
        np.testing.assert_allclose(out.to_dense(), 0.4 * b)


def test_even_t2():
    A, b, _ = small_instance(4)
    out = even_svt(A, b, ChebPoly([0.0, 0.0, 1.0]), EXACT)
    np.testing.assert_allclose(out.to_dense(), 2 * A.T @ A @ b - b, atol=1e-8)


def test_complex_exact_mode():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((12, 9)) + 1j * rng.standard_normal((12, 9))
    A /= 1.01 * np.linalg.norm(A, 2)
    b = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    b /= np.linalg.norm(b)
    for p in (random_bounded_poly(7, rng, "odd"), random_bounded_poly(6, rng, "even")):
        fn = odd_svt if p.parity == "odd" else even_svt
        got = fn(A, b, p, EXACT).to_dense()
        assert np.linalg.norm(got - svt_oracle_svd(A, b, p)) <= 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 7), st.sampled_from(["odd", "even"]))
def test_exact_mode_property(seed, half, parity):
    A, b, rng = small_instance(seed, 9, 7)
    deg = 2 * half + 1 if parity == "odd" else 2 * half
    p = random_bounded_poly(deg, rng, parity=parity)
    fn = odd_svt if parity == "odd" else even_svt
    assert np.linalg.norm(fn(A, b, p, EXACT).to_dense() - svt_oracle_svd(A, b, p)) <= 1e-8


# --- errors and preconditions ----------------------------------------------


def test_parity_and_zero_vector_errors():
    A, b, _ = small_instance(6)
    with pytest.raises(ParityError):
        odd_svt(A, b, ChebPoly([1.0, 0.0, 1.0]), EXACT)
    with pytest.raises(ParityError):
        even_svt(A, b, ChebPoly([0.0, 1.0]), EXACT)
    with pytest.raises(ZeroNormError):
        odd_svt(A, np.zeros(20), ChebPoly([0.0, 1.0]), EXACT)
    with pytest.raises(ValueError):
        odd_svt(A, np.ones(7), ChebPoly([0.0, 1.0]), EXACT)


def test_large_norm_warns_but_runs():
    A, b, _ = small_instance(7)
    with pytest.warns(RuntimeWarning, match="exceeds 1"):
        out = odd_svt(3 * A, b, ChebPoly([0.0, 1.0]), EXACT)
    np.testing.assert_allclose(out.to_dense(), 3 * A @ b, atol=1e-10)


def test_oversized_sketch_refused():
    A, b, _ = small_instance(8)
    with pytest.raises(ValueError, match="dense product"):
        odd_svt(A, b, ChebPoly([0.0, 1.0]), SvtParams(s=10, t=10, max_dense_entries=50))


@pytest.mark.filterwarnings("ignore:sketched")
def test_default_sizes_follow_formula():
    A, b, _ = small_instance(9)
    p = ChebPoly([0.0, 0.5])
    params = SvtParams(eps=0.5, delta=0.5, mu=20.0, c1=0.1)
    out = odd_svt(A, b, p, params, rng=0)
    import math

    fro = np.sum(A**2)
    s = math.ceil(0.1 * fro * math.log(20 / (0.5 / 3)) / (20.0 * 0.5) ** 2)
    assert out.diagnostics["s"] == s and out.diagnostics["t"] == s
    assert out.diagnostics["r"] == math.ceil(1 * fro * (2 * s))


def test_params_validation():
    with pytest.raises(ValueError):
        SvtParams(eps=1.5)
    with pytest.raises(ValueError):
        SvtParams(s=0)
    with pytest.raises(ValueError):
        SvtParams(mu=-1.0)


def test_default_mu_and_conditions():
    p = random_bounded_poly(21, 0, parity="odd")
    mu = default_mu(p)
    cond = stability_conditions(p, mu, 1e-3)
    assert cond["a"]
    assert len(cond["c_ratios"]) == 11
    assert not stability_conditions(p, 1e6, 1e-3)["a"]
    even = stability_conditions(random_bounded_poly(10, 0, parity="even"), 1e-4, 1e-3)
    assert even["a"] and even["b"]


def test_stability_assertion_mode():
    A, b, _ = small_instance(10)
    with pytest.raises(ValueError, match="mu"):
        odd_svt(A, b, ChebPoly([0.0, 0.5, 0.0, 0.2]), SvtParams(eps=0.5, mu=10.0, check_stability=True, exact=True))


# --- sketched pipelines ----------------------------------------------------


def test_sketched_outputs_are_sparse_and_close():
    rng = np.random.default_rng(11)
    A = low_rank(rng, 80, 60, [1.0, 0.8, 0.6])
    b = unit(rng, 60)
    p_odd = ChebPoly([0.0, 0.6, 0.0, -0.2])
    p_even = ChebPoly([0.3, 0.0, 0.4])
    params = SvtParams(s=300, t=300, r=50_000)
    for p, fn in ((p_odd, odd_svt), (p_even, even_svt)):
        out = fn(A, b, p, params, rng)
        assert out.x_nnz <= 300
        assert np.linalg.norm(out.to_dense() - svt_oracle_svd(A, b, p)) <= 0.2
        assert len(out.iterate_norms) == len(out.timings["per_iter_s"])
        assert out.timings["preprocess_s"] >= 0


def test_error_shrinks_with_sketch_size():
    rng = np.random.default_rng(12)
    A = low_rank(rng, 60, 50, [1.0, 0.7, 0.5])
    b = unit(rng, 50)
    p = ChebPoly([0.0, 0.5, 0.0, 0.3])
    want = svt_oracle_svd(A, b, p)
    medians = []
    for s, r in ((20, 400), (100, 5000), (500, 125_000)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            errs = [np.linalg.norm(odd_svt(A, b, p, SvtParams(s=s, t=s, r=r), rng=k).to_dense() - want)
                    for k in range(16)]
        medians.append(np.median(errs))
    assert medians[0] > medians[1] > medians[2]


def test_reused_best_sketch_still_runs():
    rng = np.random.default_rng(13)
    A = low_rank(rng, 40, 30, [0.9, 0.5])
    b = unit(rng, 30)
    out = odd_svt(A, b, ChebPoly([0.0, 0.5, 0.0, 0.3]), SvtParams(s=100, t=100, r=5000, reuse_best=True), rng)
    assert np.all(np.isfinite(out.x_values))


def test_sparse_input_matches_dense():
    import scipy.sparse as sp

    A, b, _ = small_instance(14)
    p = ChebPoly([0.0, 0.7, 0.0, 0.1])
    dense = odd_svt(A, b, p, SvtParams(s=50, t=50, r=3000), rng=3)
    sparse = odd_svt(sp.csr_matrix(A), b, p, SvtParams(s=50, t=50, r=3000), rng=3)
    np.testing.assert_allclose(dense.x_values, sparse.x_values)


# --- hermitian helpers -----------------------------------------------------


def test_exact_hermitian_clenshaw():
    rng = np.random.default_rng(15)
    H = rng.standard_normal((10, 10))
    H = (H + H.T) / (2.01 * np.linalg.norm(H + H.T, 2) / 2)
    b = rng.standard_normal(10)
    p = ChebPoly(rng.standard_normal(13))
    lam, W = np.linalg.eigh(H)
    want = W @ (p(lam) * (W.T @ b))
    np.testing.assert_allclose(exact_matrix_clenshaw_hermitian(H, b, p), want, atol=1e-9)
    np.testing.assert_allclose(exact_matrix_clenshaw_hermitian(np.eye(10), b, p), p(1.0) * b, atol=1e-9)
    np.testing.assert_allclose(exact_matrix_clenshaw_hermitian(np.zeros((10, 10)), b, p), p(0.0) * b,
                               atol=1e-12)
    with pytest.raises(ValueError):
        exact_matrix_clenshaw_hermitian(np.zeros((2, 3)), b[:2], p)


def test_hermitian_svt_general_polynomial():
    rng = np.random.default_rng(16)
    H = rng.standard_normal((12, 12))
    H = (H + H.T) / (1.01 * np.linalg.norm(H + H.T, 2))
    b = rng.standard_normal(12)
    p = ChebPoly(rng.standard_normal(8) / 8)
    out = hermitian_svt(H, b, p, EXACT)
    np.testing.assert_allclose(out.to_dense(), exact_matrix_clenshaw_hermitian(H, b, p), atol=1e-8)
    with pytest.raises(ValueError):
        hermitian_svt(rng.standard_normal((3, 3)), np.ones(3), p, EXACT)


# --- output access ---------------------------------------------------------


def test_entry_left_single_coefficient():
    rng = np.random.default_rng(17)
    M = rng.standard_normal((6, 4))
    A = build_sq_matrix(M)
    o = SvtOutput("left", np.array([2]), np.array([1.5]), 0.0, A, None)
    np.testing.assert_allclose(output_entry(o, np.arange(6)), 1.5 * M[:, 2])
    with pytest.raises(IndexError):
        output_entry(o, 6)


def test_entry_right_eta_only():
    A, b, _ = small_instance(18)
    out = even_svt(A, b, ChebPoly([0.7]), EXACT)
    np.testing.assert_allclose(output_entry(out, np.arange(20)), 0.7 * b)


def test_entries_match_dense_reconstruction():
    A, b, rng = small_instance(19)
    for p, fn in ((random_bounded_poly(5, rng, "odd"), odd_svt),
                  (random_bounded_poly(4, rng, "even"), even_svt)):
        o = fn(A, b, p, SvtParams(s=40, t=40, r=2000), rng)
        y = o.to_dense()
        np.testing.assert_allclose(output_entry(o, np.arange(y.size)), y, atol=1e-10)
        assert output_entry(o, 3) == pytest.approx(y[3], abs=1e-10)


def test_samples_single_column():
    rng = np.random.default_rng(20)
    M = rng.standard_normal((8, 5))
    o = SvtOutput("left", np.array([1]), np.array([2.0]), 0.0, build_sq_matrix(M), None)
    draws = output_sample(o, 0.01, rng, size=20_000)
    emp = np.bincount(draws, minlength=8) / 20_000
    np.testing.assert_allclose(emp, M[:, 1] ** 2 / np.sum(M[:, 1] ** 2), atol=0.015)


def test_output_norm_estimate():
    A, b, rng = small_instance(21)
    o = odd_svt(A, b, ChebPoly([0.0, 0.8]), EXACT)
    y = o.to_dense()
    est = [output_norm(o, 0.1, 0.1, rng) for _ in range(20)]
    assert np.mean([abs(e - y @ y) <= 0.1 * (y @ y) for e in est]) >= 0.9


def test_spectral_norm_check():
    assert spectral_norm_check(np.eye(4)) == pytest.approx(1.0)
    assert spectral_norm_check(0.5 * np.eye(3)) == pytest.approx(0.5)
    M = np.random.default_rng(22).standard_normal((30, 20))
    assert spectral_norm_check(build_sq_matrix(M)) == pytest.approx(np.linalg.svd(M, compute_uv=False)[0], rel=0.01)
    assert spectral_norm_check(np.zeros((3, 3))) == 0.0


def test_no_warning_for_normalized_input():
    A, b, _ = small_instance(23)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        odd_svt(A, b, ChebPoly([0.0, 1.0]), EXACT)
