"""Acceptance criteria 1-12, each at its stated tolerance and sample size.

Every test records the measured quantities under the ``detail`` property before
asserting, so the summary line shows what was observed even on failure.
Sketch sizes for the sketched end-to-end checks are frozen below; the
formula defaults are far too large to run at desk scale.
"""

import math
import time
import warnings

import numpy as np
import pytest
from numpy.polynomial import chebyshev as npcheb

from _instances import hamsim_instance, recommend_instance, regress_instance, svt_instance
from qisvt import (
    ChebPoly,
    SvtParams,
    build_sq_matrix,
    cheb_eval_clenshaw,
    cheb_eval_direct,
    even_clenshaw_scalar,
    even_svt,
    hamsim,
    inverse_poly,
    odd_clenshaw_scalar,
    odd_svt,
    output_entry,
    output_norm,
    output_sample,
    random_bounded_poly,
    recommend,
    regress,
    sample_aamp,
    sample_best,
    sign_poly,
    svt_oracle_svd,
    threshold_poly,
    trig_polys,
)
from qisvt.chebyshev import clenshaw_iterate_poly, iterate_bound
from qisvt.cli import chebsum_experiment, scaling_experiment, stability_experiment
from qisvt.sketch import apply_aamp_columns

# frozen sketch sizes (tuned once, see the project notes)
SVT_SIZES = dict(s=1000, t=1000, r=300_000)
REGRESS_SIZES = dict(s=3000, t=3000, r=2_000_000)
RECOMMEND_SIZES = dict(s=1000, t=1000, r=300_000)
HAMSIM_SIZES = dict(s=1000, t=1000, r=300_000)
SEEDS = range(20)


def detail(record_property, **values):
    parts = []
    for k, v in values.items():
        parts.append(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}")
    record_property("detail", ", ".join(parts))


def loglog_slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


@pytest.mark.criterion(1, "scalar Clenshaw variants match direct evaluation")
def test_criterion_01_clenshaw_exactness(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = {"standard": 0.0, "odd": 0.0, "even": 0.0}
    worst_np = 0.0
    for variant in worst:
        for _ in range(500):
            d = int(rng.integers(0, 201))
            if variant == "odd":
                d = d | 1 if d < 200 else 199
                p = random_bounded_poly(d, rng, parity="odd")
                fn = odd_clenshaw_scalar
            elif variant == "even":
                d -= d % 2
                p = random_bounded_poly(d, rng, parity="even")
                fn = even_clenshaw_scalar
            else:
                p = random_bounded_poly(d, rng)
                fn = cheb_eval_clenshaw
            x = float(rng.uniform(-1, 1))
            want = cheb_eval_direct(p, x)
            # the polynomials are normalized to sup norm one, which sets the scale
            scale = max(abs(want), 1.0)
            worst[variant] = max(worst[variant], abs(fn(p, x) - want) / scale)
            worst_np = max(worst_np, abs(npcheb.chebval(x, p.coeffs) - want) / scale)
    elapsed = time.perf_counter() - t0
    detail(record_property, **{f"max_rel_{k}": v for k, v in worst.items()}, max_rel_numpy=worst_np,
           seconds=elapsed)
    assert all(v <= 1e-10 for v in worst.values())
    assert worst_np <= 1e-10
    assert elapsed < 5


@pytest.mark.criterion(2, "noisy scalar Clenshaw within 50 eps sup-norm")
def test_criterion_02_stability(record_property):
    t0 = time.perf_counter()
    _, summary = stability_experiment(degrees=(8, 16, 32, 64), eps=1e-3, trials=1000, seed=2)
    elapsed = time.perf_counter() - t0
    fractions = {d: summary[str(d)]["pass_fraction"] for d in (8, 16, 32, 64)}
    detail(record_property, **{f"pass_d{d}": f for d, f in fractions.items()}, seconds=elapsed)
    assert all(f >= 0.99 for f in fractions.values())
    assert elapsed < 30


@pytest.mark.criterion(3, "Clenshaw iterate sup-norm bound")
def test_criterion_03_iterate_bound(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    violations = 0
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(1, 129))
        p = random_bounded_poly(d, rng)
        sup = p.sup_norm()
        for k in range(d + 1):
            ratio = clenshaw_iterate_poly(p, k).sup_norm() / (iterate_bound(d, k) * sup)
            worst = max(worst, ratio)
            violations += ratio > 1.0
    elapsed = time.perf_counter() - t0
    detail(record_property, violations=violations, worst_ratio=worst, seconds=elapsed)
    assert violations == 0
    assert elapsed < 60


@pytest.mark.criterion(4, "Chebyshev coefficient sums and the odd-sum certificate")
def test_criterion_04_chebyshev_sums(record_property):
    t0 = time.perf_counter()
    records, certs, summary = chebsum_experiment(degrees=(16, 32, 64, 128, 256), trials=100, seed=4,
                                                 certificate_degrees=range(1, 1001))
    elapsed = time.perf_counter() - t0
    worst_signed = max(r["signed_odd"] / r["signed_odd_bound"] for r in records)
    worst_step4 = max(r["step4"] / r["step4_bound"] for r in records)
    worst_cert = max(c["sum"] / c["bound"] for c in certs)
    worst_res = max(c["residual"] for c in certs)
    detail(record_property, polys=len(records), signed_ratio=worst_signed, step4_ratio=worst_step4,
           cert_sum_over_bound=worst_cert, cert_residual=worst_res, seconds=elapsed)
    assert len(records) == 500
    assert summary["pass_fraction"] == 1.0
    assert summary["certificates_pass"] and len(certs) == 1000
    assert elapsed < 60


@pytest.mark.criterion(5, "BEST mean and bilinear variance")
def test_criterion_05_best_moments(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    T = 4
    mean_fail = 0
    z2 = []
    var_errs = []
    for _ in range(5):
        A = rng.standard_normal((4, 4))
        Asq = build_sq_matrix(A)
        n = 10_000
        draws = np.array([sample_best(Asq, T, rng).to_dense() for _ in range(n)])
        # exact standard error: the bilinear variance with u = e_i, v = e_j.  The sample
        # standard deviation is unusable here because small entries are often never drawn.
        se = np.sqrt((np.sum(A**2) - A**2) / T / n)
        z = np.abs(draws.mean(axis=0) - A) / se
        z2.extend((z**2).ravel())
        mean_fail += int(np.sum(z > 3))
        u, v = rng.standard_normal(4), rng.standard_normal(4)
        vals = np.array([u @ sample_best(Asq, T, rng).matvec(v) for _ in range(100_000)])
        want = (np.sum(A**2) * (u @ u) * (v @ v) - (u @ A @ v) ** 2) / T
        var_errs.append(abs(vals.var(ddof=1) - want) / want)
    elapsed = time.perf_counter() - t0
    detail(record_property, entries_outside_3se=mean_fail, mean_z2=float(np.mean(z2)),
           max_var_rel_err=max(var_errs), seconds=elapsed)
    assert mean_fail == 0
    assert max(var_errs) <= 0.10
    assert elapsed < 60


@pytest.mark.criterion(6, "AAMP error decays like s^-1/2")
def test_criterion_06_aamp_rate(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    A = rng.standard_normal((20, 30))
    B = rng.standard_normal((30, 10))
    p = 0.5 * (np.sum(A**2, axis=0) / np.sum(A**2) + np.sum(B**2, axis=1) / np.sum(B**2))
    sizes = [100, 1000, 10_000]
    med = []
    for s in sizes:
        errs = []
        for _ in range(50):
            S = sample_aamp(p, s, rng)
            AS = apply_aamp_columns(A, S)
            SB = apply_aamp_columns(B.T, S).T
            errs.append(np.linalg.norm(A @ B - AS @ SB, 2))
        med.append(float(np.median(errs)))
    slope = loglog_slope(sizes, med)
    elapsed = time.perf_counter() - t0
    detail(record_property, slope=slope, seconds=elapsed)
    assert slope == pytest.approx(-0.5, abs=0.1)
    assert elapsed < 60


@pytest.mark.criterion(7, "exact-mode SVT equals the SVD oracle")
def test_criterion_07_exact_mode(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    A = rng.standard_normal((30, 20))
    A /= np.linalg.norm(A, 2) * 1.0001
    worst = {"odd": 0.0, "even": 0.0}
    for parity, fn in (("odd", odd_svt), ("even", even_svt)):
        for _ in range(20):
            d = int(rng.integers(0, 16))
            d = d | 1 if parity == "odd" else d - d % 2
            p = random_bounded_poly(d, rng, parity=parity)
            b = rng.standard_normal(20)
            got = fn(A, b, p, SvtParams(exact=True)).to_dense()
            worst[parity] = max(worst[parity], float(np.linalg.norm(got - svt_oracle_svd(A, b, p))))
    elapsed = time.perf_counter() - t0
    detail(record_property, max_residual_odd=worst["odd"], max_residual_even=worst["even"], seconds=elapsed)
    assert max(worst.values()) <= 1e-8
    assert elapsed < 30


@pytest.mark.criterion(8, "sketched SVT end to end, 18 of 20 seeds")
def test_criterion_08_sketched_svt(record_property):
    t0 = time.perf_counter()
    polys = {"odd": random_bounded_poly(9, np.random.default_rng(808), parity="odd"),
             # an even polynomial has even degree; 8 is the closest to the stated 9
             "even": random_bounded_poly(8, np.random.default_rng(809), parity="even")}
    params = SvtParams(eps=0.2, delta=0.1, **SVT_SIZES)
    errors = {"odd": [], "even": []}
    for seed in SEEDS:
        A, b = svt_instance(seed)
        for parity, fn in (("odd", odd_svt), ("even", even_svt)):
            p = polys[parity]
            y = fn(A, b, p, params, rng=[88, seed]).to_dense()
            errors[parity].append(float(np.linalg.norm(y - svt_oracle_svd(A, b, p))))
    elapsed = time.perf_counter() - t0
    ok = {k: sum(e <= 0.2 for e in v) for k, v in errors.items()}
    detail(record_property, odd_ok=f"{ok['odd']}/20", even_ok=f"{ok['even']}/20",
           odd_max=max(errors["odd"]), even_max=max(errors["even"]), seconds=elapsed)
    assert ok["odd"] >= 18 and ok["even"] >= 18
    assert elapsed < 600


@pytest.mark.criterion(9, "polynomial constructions certify")
def test_criterion_09_polynomials(record_property):
    t0 = time.perf_counter()
    x = np.linspace(-1, 1, 200_001)
    y = np.linspace(-2, 2, 400_001)
    checks = {}

    for gap, eps in ((0.2, 0.01), (0.1, 0.001)):
        spec = sign_poly(gap, eps)
        vals = cheb_eval_clenshaw(spec.report["wide"], y / 2)
        band = np.abs(y) >= gap
        checks[f"sign_{gap}"] = (spec.certified and np.max(np.abs(vals)) <= 1 + 1e-9
                                 and np.max(np.abs(vals[band] - np.sign(y[band]))) <= eps
                                 and spec.poly(0.0) == 0.0)

    sigma, eta, vs = 0.5, 0.1, 0.01
    spec = threshold_poly(sigma, eta, vs)
    vals = spec.poly(x)
    checks["threshold"] = (spec.certified and vals.min() >= -1e-9 and vals.max() <= 1 + 1e-9
                           and np.all(vals[np.abs(x) >= (1 + eta) * sigma] >= 1 - vs)
                           and np.all(vals[np.abs(x) <= (1 - eta) * sigma] <= vs)
                           and np.max(np.abs(vals - spec.poly(-x))) <= 1e-10)

    spec = inverse_poly(4.0, 0.05)
    g = spec.poly(x)
    dom = x >= 0.25
    checks["inverse"] = (spec.certified and np.max(np.abs(g[dom] - 1 / x[dom])) <= 0.05
                         and np.max(np.abs(g)) <= 4 * spec.report["J"])

    for t, eps in ((0.0, 1e-6), (1.0, 1e-6), (math.pi / 2, 1e-4)):
        c, s = trig_polys(t, eps)
        checks[f"trig_{t:.3g}"] = (np.max(np.abs(c.poly(x) - np.cos(t * x))) <= eps
                                   and np.max(np.abs(s.poly(x) - np.sin(t * x))) <= eps)
    elapsed = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    detail(record_property, checks=len(checks), failed=",".join(failed) or "none", seconds=elapsed)
    assert not failed
    assert elapsed < 60


def _app_ratios(run):
    ratios = []
    for seed in SEEDS:
        res = run(seed)
        ratios.append(res.residual / res.target)
    return ratios


@pytest.mark.criterion(10, "applications against dense oracles, 18 of 20 seeds each")
def test_criterion_10_applications(record_property):
    t0 = time.perf_counter()

    def run_regress(seed):
        A, b = regress_instance(seed)
        return regress(A, b, 0.5, 0.1, SvtParams(**REGRESS_SIZES), rng=[101, seed])

    def run_recommend(seed):
        A, i = recommend_instance(seed)
        return recommend(A, i, 0.5, 0.2, params=SvtParams(**RECOMMEND_SIZES), rng=[102, seed])

    def run_hamsim(seed):
        H, b = hamsim_instance(seed)
        return hamsim(H, b, 2.0, 0.1, SvtParams(**HAMSIM_SIZES), rng=[103, seed])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ratios = {name: _app_ratios(fn) for name, fn in
                  (("regress", run_regress), ("recommend", run_recommend), ("hamsim", run_hamsim))}
    elapsed = time.perf_counter() - t0
    ok = {k: sum(r <= 1.0 for r in v) for k, v in ratios.items()}
    detail(record_property, **{f"{k}_ok": f"{v}/20" for k, v in ok.items()},
           **{f"{k}_max_ratio": max(v) for k, v in ratios.items()}, seconds=elapsed)
    assert all(v >= 18 for v in ok.values())
    assert elapsed < 900


@pytest.mark.criterion(11, "per-iteration cost independent of dimension")
def test_criterion_11_dimension_independence(record_property):
    t0 = time.perf_counter()
    _, summary = scaling_experiment(n_list=(1000, 10_000, 100_000), s=200, t=200, r=20_000, degree=9,
                                    trials=3, seed=11)
    elapsed = time.perf_counter() - t0
    detail(record_property, per_iter_growth=summary["per_iteration_growth"],
           preprocess_slope=summary["preprocess_slope"], seconds=elapsed)
    assert summary["per_iteration_growth"] < 2.0
    assert summary["preprocess_slope"] == pytest.approx(1.0, abs=0.3)
    assert elapsed < 600


@pytest.mark.criterion(12, "output entry, sample and norm access")
def test_criterion_12_output_access(record_property):
    rng = np.random.default_rng(1212)
    A, b = svt_instance(0)
    # left output of length 200 and a right output of length 50
    left = odd_svt(A, b, ChebPoly([0.0, 0.6, 0.0, 0.3]), SvtParams(s=300, t=300, r=50_000), rng)
    B = A[:60, :50] / np.linalg.norm(A[:60, :50], 2)
    right = even_svt(B, rng.standard_normal(50), ChebPoly([0.3, 0.0, 0.5]),
                     SvtParams(s=300, t=300, r=50_000), rng)
    entry_err = max(float(np.max(np.abs(output_entry(o, np.arange(o.dim)) - o.to_dense())))
                    for o in (left, right))

    y = right.to_dense()
    assert y.size == 50
    draws = output_sample(right, 0.01, rng, size=100_000)
    emp = np.bincount(draws, minlength=50) / draws.size
    tv = 0.5 * float(np.abs(emp - np.abs(y) ** 2 / (y @ y)).sum())

    truth = float(np.vdot(y, y).real)
    hits = sum(abs(output_norm(right, 0.1, 0.1, rng) - truth) <= 0.1 * truth for _ in range(100))
    detail(record_property, entry_err=entry_err, tv=tv, norm_success=f"{hits}/100")
    assert entry_err <= 1e-10
    assert tv < 0.05
    assert hits >= 90
