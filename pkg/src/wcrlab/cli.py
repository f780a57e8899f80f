"""``wcr`` command line interface."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from . import efficiency, estimators, experiments, families, winfo, wscore
from .numerics import McConfig

log = logging.getLogger("wcrlab")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _family(text: str) -> families.ParametricFamily1D:
    if os.path.exists(text):
        with open(text) as fh:
            text = fh.read()
    return families.from_descriptor(text)


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, default=_jsonable)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def cmd_score(args) -> int:
    fam = _family(args.family)
    theta = fam.check_theta(_floats(args.theta))
    score = wscore.solve_score_1d(fam, theta, args.param)
    lo, hi = score.window
    # stay clear of the window ends so the difference stencil fits
    x = np.linspace(lo, hi, args.grid + 2)[1:-1]
    phi, dphi = score.phi(x), score.dphi(x)
    res = wscore.continuity_residual(fam, theta, score, x)
    w = csv.writer(sys.stdout)
    w.writerow(["x", "phi", "dphi", "residual"])
    for row in zip(x, phi, dphi, res):
        w.writerow([repr(float(v)) for v in row])
    return 0


def cmd_winfo(args) -> int:
    fam = _family(args.family)
    G = winfo.info_matrix(fam, _floats(args.theta), args.nobs)
    _emit({"G_W": G.matrix, "eigenvalues": G.eigenvalues, "n_obs": G.n_obs})
    return 0


def cmd_w2(args) -> int:
    fam = _family(args.family)
    t1, t2 = _floats(args.theta1), _floats(args.theta2)
    log.info("clipped quantile tails contribute at most %.3g to the raw cost", winfo.transport_tail_bound(fam, t1, fam, t2))
    if args.raw:
        print(repr(winfo.transport_cost_1d(fam, t1, fam, t2)))
    else:
        print(repr(winfo.w2_distance_1d(fam, t1, fam, t2)))
    return 0


def _read_data(path: str) -> np.ndarray:
    text = sys.stdin.read() if path == "-" else open(path).read()
    vals = []
    for row in csv.reader(io.StringIO(text)):
        for cell in row:
            cell = cell.strip()
            if not cell:
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                continue  # header
    return np.asarray(vals)


def cmd_estimate(args) -> int:
    x = _read_data(args.data)
    out: dict = {"estimator": args.estimator, "n": int(x.size)}
    if args.estimator == "wasserstein":
        est = estimators.wasserstein_estimator(x)
        out.update(mu=est.mu, sigma=est.sigma, degenerate=est.degenerate)
        if not est.degenerate:
            g = estimators.grad_wasserstein_estimator(x)
            out["grad_sq_norms"] = {"mu": float(g[0] @ g[0]), "sigma": float(g[1] @ g[1])}
    elif args.estimator in ("mle-laplace", "median"):
        med = estimators.sample_median(x)
        out.update(value=med.value, tie=med.tie, grad_sq_norms={"value": float(med.gradient @ med.gradient)})
    elif args.estimator == "mean-sq":
        val, g = estimators.mean_of_squares(x)
        out.update(value=val, grad_sq_norms={"value": float(g @ g)})
    else:
        raise ValueError(f"unknown estimator {args.estimator!r}")
    _emit(out)
    return 0


def cmd_efficiency(args) -> int:
    fam = _family(args.family)
    stat = estimators.get_statistic(args.estimator)
    mc = McConfig(trials=args.trials, seed=args.seed, workers=args.workers)
    rep = efficiency.efficiency_gap(fam, _floats(args.theta), stat, args.n, mc, route=args.route)
    _emit(rep.to_dict())
    return 0


def cmd_geodesic(args) -> int:
    fam = _family(args.family)
    verdict = efficiency.check_e_geodesic(fam, [[t] for t in _floats(args.thetas)])
    _emit(verdict.to_dict())
    return 0


def cmd_sweep(args) -> int:
    base = families.BASES[args.base]
    mc = McConfig(trials=args.trials, seed=args.seed, workers=args.workers)
    rows = experiments.asymptotic_efficiency_sweep(base, _floats(args.theta), _ints(args.ns), mc)
    checks = {}
    for r in rows:
        checks[f"scaled_gap_11_zero_n={r['n']}"] = abs(r["scaled_gap_11"]) <= 1e-10
        if "c_n_oracle" in r:
            checks[f"c_n_3sigma_n={r['n']}"] = abs(r["c_n"] - r["c_n_oracle"]) <= 3 * r["c_n_stderr"]
    for a, b in zip(rows, rows[1:]):
        tol = 3 * np.hypot(a["scaled_gap_22_stderr"], b["scaled_gap_22_stderr"])
        checks[f"scaled_gap_22_decreasing_n={b['n']}"] = b["scaled_gap_22"] < a["scaled_gap_22"] + tol
    if args.out:
        experiments.write_csv(rows, args.out)
    _emit({"rows": rows if not args.out else f"written to {args.out}", "checks": checks, "passed": all(checks.values())})
    return 0 if all(checks.values()) else 1


def cmd_laplace(args) -> int:
    mc = McConfig(trials=args.trials, seed=args.seed, workers=args.workers)
    rep = experiments.laplace_robustness(args.sigma, args.n, _floats(args.eps), mc)
    if args.out:
        experiments.write_csv(rep.rows, args.out)
    _emit(rep.summary(), args.summary)
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wcr", description="Wasserstein score, information and efficiency tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    fam_help = 'JSON descriptor or path, e.g. \'{"kind": "location-scale", "base": "laplace"}\''

    s = sub.add_parser("score", help="tabulate a Wasserstein score function")
    s.add_argument("--family", required=True, help=fam_help)
    s.add_argument("--theta", required=True)
    s.add_argument("--param", type=int, default=0)
    s.add_argument("--grid", type=int, default=512)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("winfo", help="Wasserstein information matrix")
    s.add_argument("--family", required=True, help=fam_help)
    s.add_argument("--theta", required=True)
    s.add_argument("--nobs", type=int, default=1)
    s.set_defaults(func=cmd_winfo)

    s = sub.add_parser("w2", help="W2 distance between two members of a family")
    s.add_argument("--family", required=True, help=fam_help)
    s.add_argument("--theta1", required=True)
    s.add_argument("--theta2", required=True)
    s.add_argument("--raw", action="store_true", help="print the unhalved transport cost instead")
    s.set_defaults(func=cmd_w2)

    s = sub.add_parser("estimate", help="evaluate an estimator on data")
    s.add_argument("--data", required=True, help="CSV file of numbers, or - for stdin")
    s.add_argument("--estimator", choices=["wasserstein", "mle-laplace", "median", "mean-sq"], default="wasserstein")
    s.set_defaults(func=cmd_estimate)

    def mc_args(s, trials):
        s.add_argument("--trials", type=int, default=trials)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("efficiency", help="WCR bound and efficiency gap of an estimator")
    s.add_argument("--family", required=True, help=fam_help)
    s.add_argument("--estimator", required=True, choices=sorted(estimators.STATISTICS))
    s.add_argument("--theta", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--route", choices=["auto", "mc", "quadrature"], default="auto")
    mc_args(s, 20_000)
    s.set_defaults(func=cmd_efficiency)

    s = sub.add_parser("geodesic", help="e-geodesic test for a one-parameter family")
    s.add_argument("--family", required=True, help=fam_help)
    s.add_argument("--thetas", required=True)
    s.set_defaults(func=cmd_geodesic)

    s = sub.add_parser("theorem2", help="asymptotic efficiency sweep of the Wasserstein estimator")
    s.add_argument("--base", choices=sorted(families.BASES), default="gaussian")
    s.add_argument("--theta", default="0,1")
    s.add_argument("--ns", default="5,10,20,50,100")
    s.add_argument("--out")
    mc_args(s, 20_000)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("laplace-robustness", help="noise robustness of mean vs median under Laplace data")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--n", type=int, default=1001)
    s.add_argument("--eps", default="0.05,0.1,0.2")
    s.add_argument("--out", help="per-eps CSV")
    s.add_argument("--summary", help="JSON summary path (stdout if omitted)")
    mc_args(s, 200_000)
    s.set_defaults(func=cmd_laplace)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, RuntimeError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
