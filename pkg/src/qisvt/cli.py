"""Command-line driver: ``qisvt <command> [options]``.

Commands ``svt``, ``regress``, ``recommend`` and ``hamsim`` run one
computation and print (or write) a JSON report; ``poly`` builds an
approximating polynomial; ``stability``, ``chebsums`` and ``scaling`` are
experiment suites that assert their bounds and exit with status 2 when one
fails.  Malformed input exits with status 3.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import apps
from .chebyshev import (
    ChebPoly,
    NoiseConfig,
    cheb_eval_clenshaw,
    cheb_eval_direct,
    clenshaw_iterate_poly,
    coeff_progression_sum,
    iterate_bound,
    odd_sum_certificate,
    odd_sum_certificate_residual,
    random_bounded_poly,
    signed_odd_sum_bound,
    step_four_sum_bound,
)
from .exceptions import ParseError, QisvtError
from .io import read_matrix, read_poly, read_vector
from .polyapprox import inverse_poly, sign_poly, threshold_poly, trig_polys
from .reference import svt_oracle_svd
from .sq_access import build_sq_matrix, build_sq_vector
from .svt import SvtParams, even_svt, odd_svt

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_ASSERT, EXIT_IO = 0, 1, 2, 3
DENSE_ORACLE_LIMIT = 10_000_000


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def workers():
    env = os.environ.get("QISVT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def trial_streams(seed, n):
    """Independent generators for trials ``0 .. n-1`` derived from ``seed``."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _map(fn, items):
    items = list(items)
    w = min(workers(), len(items))
    if w <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, items))


def git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def _jsonable(obj):
    if isinstance(obj, ChebPoly):
        return {"coefficients": obj.coeffs.tolist(), "parity": obj.parity}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def make_report(command, config, trials=None, summary=None, **extra):
    rep = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "version": git_describe(),
        "config": config,
    }
    if trials is not None:
        rep["trials"] = trials
    if summary is not None:
        rep["summary"] = summary
    rep.update(extra)
    return _jsonable(rep)


def emit(report, args, rows=None):
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    if args.csv and rows:
        keys = list(dict.fromkeys(k for r in rows for k in r))
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for r in rows:
                w.writerow(_jsonable(r))


def sparse_triples(indices, values):
    """``[[index (1-based), re, im], ...]``."""
    vals = np.asarray(values)
    return [[int(i) + 1, float(np.real(v)), float(np.imag(v))] for i, v in zip(indices, vals)]


def output_json(o):
    t = o.timings if isinstance(o.timings, dict) else {}
    rec = {
        "side": o.side,
        "x": sparse_triples(o.x_indices, o.x_values),
        "eta": o.eta,
        "iterate_norms": o.iterate_norms,
        "diagnostics": o.diagnostics,
    }
    if "preprocess_s" in t:
        rec["timings"] = {"preprocess_ms": 1e3 * t["preprocess_s"],
                          "per_iter_ms": [1e3 * v for v in t["per_iter_s"]]}
    return rec


def _params(args):
    return SvtParams(eps=args.eps, delta=args.delta, mu=args.mu, s=args.s, t=args.t, r=args.r,
                     exact=args.exact)


def _config(args):
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def stability_experiment(degrees=(8, 16, 32, 64), eps=1e-3, trials=1000, mu_scale=1.0,
                         mode="worst-sign-random", seed=0):
    """Noisy scalar Clenshaw on random bounded polynomials.

    ``mu = mu_scale / (4 d^2 ln(d + 2))``, per-operation error ``mu * eps``;
    a trial passes when ``|noisy - exact| <= 50 eps ||p||``.
    """
    records = []
    for d in degrees:
        mu = mu_scale / (4.0 * d * d * math.log(d + 2))

        def one(arg, d=d, mu=mu):
            k, rng = arg
            p = random_bounded_poly(d, rng)
            x = float(rng.uniform(-1.0, 1.0))
            noisy = cheb_eval_clenshaw(p, x, NoiseConfig(mu * eps, mode), rng)
            err = abs(noisy - cheb_eval_direct(p, x))
            sup = p.sup_norm()
            return {"degree": d, "trial": k, "x": x, "error": err, "ratio": err / eps,
                    "pass": err <= 50.0 * eps * sup}

        records.extend(_map(one, enumerate(trial_streams([seed, d], trials))))
    summary = {}
    for d in degrees:
        rs = [r for r in records if r["degree"] == d]
        ratios = np.array([r["ratio"] for r in rs])
        summary[str(d)] = {"pass_fraction": float(np.mean([r["pass"] for r in rs])),
                           "median_ratio": float(np.median(ratios)),
                           "max_ratio": float(ratios.max())}
    summary["pass_fraction"] = float(np.mean([r["pass"] for r in records]))
    return records, summary


def chebsum_experiment(degrees=(16, 64, 256), trials=100, seed=0, explore=False,
                       certificate_degrees=None, iterates=False):
    """Coefficient progression sums of random bounded polynomials against their bounds."""
    records = []
    for d in degrees:
        def one(arg, d=d):
            k, rng = arg
            p = random_bounded_poly(d, rng)
            sup = p.sup_norm()
            signed = abs(coeff_progression_sum(p, 2, 1, sign_alternating=True))
            step4 = max(abs(coeff_progression_sum(p, 4, o)) for o in range(4))
            rec = {"degree": d, "trial": k, "sup": sup, "signed_odd": signed,
                   "signed_odd_bound": signed_odd_sum_bound(d) * sup, "step4": step4,
                   "step4_bound": step_four_sum_bound(d) * sup}
            rec["pass"] = signed <= rec["signed_odd_bound"] and step4 <= rec["step4_bound"]
            if iterates:
                worst = 0.0
                for j in range(d + 1):
                    q = clenshaw_iterate_poly(p, j)
                    worst = max(worst, q.sup_norm() / (iterate_bound(d, j) * sup))
                rec["iterate_ratio"] = worst
                rec["pass"] = rec["pass"] and worst <= 1.0
            if explore:
                rec["progressions"] = {
                    f"{step}:{o}": abs(coeff_progression_sum(p, step, o))
                    for step in range(2, 7) for o in range(step)
                }
            return rec

        records.extend(_map(one, enumerate(trial_streams([seed, d], trials))))
    certs = []
    for d in (certificate_degrees if certificate_degrees is not None else degrees):
        c = odd_sum_certificate(d)
        total = math.fsum(c.tolist())
        bound = math.log(d) + 2.0 if d >= 1 else 1.0
        res = odd_sum_certificate_residual(c)
        certs.append({"degree": d, "min": float(c.min()), "sum": total, "bound": bound,
                      "residual": res,
                      "pass": bool(c.min() > 0 and total <= bound and res <= 1e-10)})
    summary = {"pass_fraction": float(np.mean([r["pass"] for r in records])) if records else 1.0,
               "certificates_pass": all(c["pass"] for c in certs)}
    if explore:
        explore_summary = {}
        for d in degrees:
            rs = [r for r in records if r["degree"] == d]
            explore_summary[str(d)] = {
                key: max(r["progressions"][key] for r in rs) for key in rs[0]["progressions"]
            }
            explore_summary[str(d)]["log_d"] = math.log(d)
        summary["conjecture_exploration"] = explore_summary
    return records, certs, summary


def scaling_instance(n, nnz_per_row=10, seed=0):
    """Random sparse ``n x n`` matrix with ``nnz_per_row`` entries per row, ``||A||_F = 1``."""
    rng = np.random.default_rng([seed, n])
    rows = np.repeat(np.arange(n), nnz_per_row)
    cols = rng.integers(0, n, size=rows.size)
    A = sp.csr_matrix((rng.standard_normal(rows.size), (rows, cols)), shape=(n, n))
    A.sum_duplicates()
    A.data /= np.linalg.norm(A.data)
    b = rng.standard_normal(n)
    return A, b / np.linalg.norm(b)


def scaling_experiment(n_list=(1000, 10000, 100000), s=200, t=200, r=20000, degree=9,
                       trials=3, seed=0):
    """Preprocessing and per-iteration time of the odd pipeline as ``n`` grows."""
    p = ChebPoly(np.r_[np.zeros(degree), 1.0])
    params = SvtParams(s=s, t=t, r=r, check_norm=False)
    # warm-up so compilation and cache loading are not charged to the first size
    A, b = scaling_instance(min(n_list), seed=seed)
    odd_svt(build_sq_matrix(A), build_sq_vector(b), p, params, rng=seed)
    records = []
    for n in n_list:
        A, b = scaling_instance(n, seed=seed)
        for k in range(trials):
            t0 = time.perf_counter()
            Asq = build_sq_matrix(A)
            bsq = build_sq_vector(b)
            build = time.perf_counter() - t0
            out = odd_svt(Asq, bsq, p, params, rng=[seed, n, k])
            records.append({"n": n, "nnz": int(A.nnz), "trial": k,
                            "build_s": build, "sketch_s": out.timings["preprocess_s"],
                            "preprocess_s": build + out.timings["preprocess_s"],
                            "per_iter_s": float(np.median(out.timings["per_iter_s"]))})
    med = {n: {"preprocess_s": float(np.median([r["preprocess_s"] for r in records if r["n"] == n])),
               "per_iter_s": float(np.median([r["per_iter_s"] for r in records if r["n"] == n]))}
           for n in n_list}
    lo, hi = min(n_list), max(n_list)
    growth = med[hi]["per_iter_s"] / med[lo]["per_iter_s"]
    nnz = np.log([next(r["nnz"] for r in records if r["n"] == n) for n in n_list])
    pre = np.log([med[n]["preprocess_s"] for n in n_list])
    slope = float(np.polyfit(nnz, pre, 1)[0])
    summary = {"per_iteration_growth": growth, "preprocess_slope": slope,
               "medians": {str(n): v for n, v in med.items()},
               "pass": bool(growth < 2.0 and abs(slope - 1.0) <= 0.3)}
    return records, summary


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_svt(args):
    A = read_matrix(args.matrix)
    b = read_vector(args.vector)
    p = read_poly(args.poly)
    if args.parity and p.parity != args.parity:
        raise QisvtError(f"polynomial parity is {p.parity}, --parity says {args.parity}")
    fn = odd_svt if p.parity == "odd" else even_svt
    if p.parity == "general":
        raise QisvtError("svt needs an even or odd polynomial")
    out = fn(A, b, p, _params(args), np.random.default_rng(args.seed))
    rec = output_json(out)
    if args.oracle and A.shape[0] * A.shape[1] <= DENSE_ORACLE_LIMIT:
        want = svt_oracle_svd(A.to_dense(), out.b.to_dense(), p)
        rec["error_vs_oracle"] = float(np.linalg.norm(out.to_dense() - want))
    emit(make_report("svt", _config(args), **rec), args,
         rows=[{"k": k, "norm": v} for k, v in enumerate(out.iterate_norms)])
    return EXIT_OK


def _app_report(name, res, args):
    rec = {"output": output_json(res.output), "residual": res.residual, "target": res.target,
           "ideal_gap": res.ideal_gap, "success": res.success if res.residual is not None else None,
           "params": res.params}
    if res.parts:
        rec["parts"] = {k: output_json(v) for k, v in res.parts.items()}
    emit(make_report(name, _config(args), **rec), args)
    return EXIT_OK


def cmd_regress(args):
    A = read_matrix(args.matrix)
    b = read_vector(args.vector)
    res = apps.regress(A, b, args.sigma, args.eps, _params(args),
                       np.random.default_rng(args.seed), oracle=args.oracle)
    return _app_report("regress", res, args)


def cmd_recommend(args):
    A = read_matrix(args.matrix)
    res = apps.recommend(A, args.row - 1, args.sigma, args.eps, eta=args.eta,
                         varsigma=args.varsigma, params=_params(args),
                         rng=np.random.default_rng(args.seed), oracle=args.oracle)
    return _app_report("recommend", res, args)


def cmd_hamsim(args):
    H = read_matrix(args.matrix)
    b = read_vector(args.vector)
    res = apps.hamsim(H, b, args.time, args.eps, _params(args),
                      np.random.default_rng(args.seed), oracle=args.oracle)
    return _app_report("hamsim", res, args)


def cmd_poly(args):
    kind = args.kind
    if kind == "sign":
        specs = [sign_poly(args.gap, args.eps)]
    elif kind == "threshold":
        specs = [threshold_poly(args.sigma, args.eta, args.varsigma)]
    elif kind == "inverse":
        specs = [inverse_poly(args.kappa, args.eps)]
    else:
        cos_spec, sin_spec = trig_polys(args.time, args.eps)
        specs = [cos_spec if kind == "cos" else sin_spec]
    spec = specs[0]
    report = make_report("poly", _config(args), kind=spec.kind, params=spec.params,
                         coefficients=spec.poly.coeffs, parity=spec.poly.parity,
                         degree=spec.poly.degree, sup_norm=spec.sup_norm,
                         certified=spec.certified, report=spec.report)
    emit(report, args)
    return EXIT_OK if spec.certified else EXIT_ASSERT


def cmd_stability(args):
    records, summary = stability_experiment(args.degrees, args.eps, args.trials, args.mu_scale,
                                            args.mode, args.seed)
    ok = summary["pass_fraction"] >= args.min_pass
    summary["pass"] = ok
    emit(make_report("stability", _config(args), records, summary), args, records)
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_chebsums(args):
    records, certs, summary = chebsum_experiment(args.degrees, args.trials, args.seed,
                                                 args.explore_conjecture)
    ok = summary["pass_fraction"] == 1.0 and summary["certificates_pass"]
    summary["pass"] = ok
    rows = [{k: v for k, v in r.items() if k != "progressions"} for r in records]
    emit(make_report("chebsums", _config(args), records, summary, certificates=certs), args, rows)
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_scaling(args):
    records, summary = scaling_experiment(args.n_list, args.s or 200, args.t or 200,
                                          args.r or 20000, args.degree, args.trials, args.seed)
    emit(make_report("scaling", _config(args), records, summary), args, records)
    return EXIT_OK if summary["pass"] else EXIT_ASSERT


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _int_list(text):
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--eps", type=float, default=0.1)
    common.add_argument("--delta", type=float, default=0.1)
    common.add_argument("--trials", type=int, default=100)
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--csv", help="also write a per-trial CSV table")

    sizes = argparse.ArgumentParser(add_help=False)
    sizes.add_argument("--s", type=int, help="column sketch size")
    sizes.add_argument("--t", type=int, help="row sketch size")
    sizes.add_argument("--r", type=int, help="entry samples per BEST sketch")
    sizes.add_argument("--mu", type=float)
    sizes.add_argument("--exact", action="store_true", help="bypass every sketch")
    sizes.add_argument("--oracle", action="store_true", help="report the residual against a dense oracle")

    parser = argparse.ArgumentParser(prog="qisvt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("svt", parents=[common, sizes], help="apply p(A) to b")
    p.add_argument("--matrix", required=True)
    p.add_argument("--vector", required=True)
    p.add_argument("--poly", required=True)
    p.add_argument("--parity", choices=("odd", "even"))
    p.set_defaults(func=cmd_svt)

    p = sub.add_parser("regress", parents=[common, sizes], help="thresholded pseudoinverse applied to b")
    p.add_argument("--matrix", required=True)
    p.add_argument("--vector", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("recommend", parents=[common, sizes], help="thresholded row of a preference matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--row", type=int, required=True, help="1-based row index")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.4)
    p.add_argument("--varsigma", type=float, default=0.1)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("hamsim", parents=[common, sizes], help="exp(i t H) b")
    p.add_argument("--matrix", required=True)
    p.add_argument("--vector", required=True)
    p.add_argument("--time", type=float, required=True)
    p.set_defaults(func=cmd_hamsim)

    p = sub.add_parser("poly", parents=[common], help="build an approximating polynomial")
    p.add_argument("--kind", choices=("sign", "threshold", "inverse", "cos", "sin"), required=True)
    p.add_argument("--gap", type=float, default=0.1, help="sign: gap around zero")
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--varsigma", type=float, default=0.01)
    p.add_argument("--kappa", type=float, default=4.0)
    p.add_argument("--time", type=float, default=1.0)
    p.set_defaults(func=cmd_poly)

    p = sub.add_parser("stability", parents=[common], help="noisy Clenshaw sweep")
    p.add_argument("--degrees", type=_int_list, default=[8, 16, 32, 64])
    p.add_argument("--mu-scale", type=float, default=1.0)
    p.add_argument("--mode", choices=("worst-sign-random", "uniform-random"), default="worst-sign-random")
    p.add_argument("--min-pass", type=float, default=0.99)
    p.set_defaults(func=cmd_stability, eps=1e-3, trials=1000)

    p = sub.add_parser("chebsums", parents=[common], help="coefficient progression bounds")
    p.add_argument("--degrees", type=_int_list, default=[16, 64, 256])
    p.add_argument("--explore-conjecture", action="store_true")
    p.set_defaults(func=cmd_chebsums)

    p = sub.add_parser("scaling", parents=[common], help="dimension-independence timing")
    p.add_argument("--n-list", type=_int_list, default=[1000, 10000, 100000])
    p.add_argument("--s", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--degree", type=int, default=9)
    p.set_defaults(func=cmd_scaling, trials=3)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, OSError) as exc:
        print(f"qisvt: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (QisvtError, ValueError) as exc:
        print(f"qisvt: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
