"""Command line front end: ``specshift <subcommand> [options]``.

Every run writes ``report.json`` (deterministic for a fixed config and seed),
``timings.json`` and, where a table is produced, ``<subcommand>.csv`` into
``--out-dir``.  The exit status is 0 iff every declared tolerance passed,
1 on a tolerance failure and 2 on a usage error.

Function specs (``--f``):
  gaussian            e^{-x^2}
  gaussian:a,b        e^{-a (x-b)^2}
  rational:m,re,im    (z - x)^{-m} with z = re + i im
  poly:c0,c1,...      c0 + c1 x + ... (test family)
  x^k                 monomial
  <file.json> | {...} JSON {"variant": ..., "terms": [...]}

CSV tables (one row per record, CRLF line ends):
  divdiff     route, re, im, error_estimate
  moi         m, norm_S, error, tail_bound
  deriv       trial, moi_vs_fd[, moi_vs_resolvent]
  remainder   s, remainder_norm, ratio_to_previous
  ssf         left, right, xi
  cyclic      trial, residual
  scan        dim, trial, trace_ratio, trace_normalized, phi_ratio, phi_normalized
  violations  property, trial, lhs, rhs, excess   (propcheck)
  interp      dim, max_ratio

Matrix files are JSON row-major lists of [re, im] pairs.  ``--config``
takes a JSON object whose keys are option names (dashes or underscores);
explicit command line flags take precedence.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import divdiff as dd
from .ensembles import gue, random_hermitian, trial_rngs
from .functions import (
    GaussianCombination,
    Polynomial,
    RationalFunction,
    function_from_json,
    gaussian,
)
from .ideals import (
    DMConvex,
    DixmierMacaev,
    IdealSpec,
    Lorentz,
    Schatten,
    WeakSchatten,
    interpolation_check,
    norm_report,
    quasinorm_property_suite,
)
from .io import RunReport, emit_report, load_complex_matrix, load_matrix, write_csv
from .moi import DividedDifferenceSymbol, MoiRequest, moi_dyadic, moi_spectral
from .perturbation import (
    PerturbationPair,
    cyclic_identity_check,
    estimate_scan,
    gateaux_derivative_fd,
    gateaux_derivative_moi,
    krein_residual,
    krein_ssf,
    rational,
    resolvent_derivative,
    taylor_remainder,
)

__all__ = ["main", "run", "parse_function", "parse_levels", "build_parser"]


class UsageError(ValueError):
    pass


# -- parsing helpers ---------------------------------------------------------


def parse_function(text):
    text = str(text).strip()
    if text.startswith("{"):
        return function_from_json(json.loads(text))
    if text.endswith(".json"):
        return function_from_json(json.loads(Path(text).read_text(encoding="utf-8")))
    name, _, rest = text.partition(":")
    nums = [float(v) for v in rest.split(",") if v.strip()] if rest else []
    if name == "gaussian":
        a, b = (nums + [1.0, 0.0][len(nums):])[:2] if nums else (1.0, 0.0)
        return gaussian(a=a, b=b)
    if name == "rational":
        m, re, im = (nums + [1.0, 0.0, 1.0][len(nums):])[:3]
        return rational(int(m), complex(re, im))
    if name == "poly":
        return Polynomial(nums)
    if name.startswith("x^"):
        return Polynomial.monomial(int(name[2:]))
    if name == "x":
        return Polynomial.monomial(1)
    raise UsageError(f"unknown function spec {text!r}")


def parse_levels(text):
    """``"1..12"`` or ``"3,5,8"``."""
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def parse_floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def parse_ints(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _pair(args, rng, d):
    if args.H:
        h = load_matrix(args.H)
        v = load_matrix(args.V) if args.V else None
        if v is None:
            raise UsageError("--H needs --V")
        return PerturbationPair(h, v)
    return PerturbationPair(gue(d, rng), random_hermitian(d, rng, args.v_scale / math.sqrt(d)))


# -- subcommands -------------------------------------------------------------


def cmd_divdiff(args, rep):
    f = parse_function(args.f)
    lam = parse_floats(args.lam)
    if args.n is not None and args.n != len(lam) - 1:
        raise UsageError(f"--n {args.n} does not match {len(lam)} nodes")
    routes = ["recursive", "rational", "simplex", "cone"] if args.routes == "all" else args.routes.split(",")
    rows = []
    values = {}
    for route in routes:
        if route == "recursive":
            val, err = dd.divdiff_recursive(f, lam), 0.0
        elif route == "rational":
            if not isinstance(f, RationalFunction):
                continue
            val, err = dd.divdiff_rational_function(f, lam), 0.0
        elif route == "simplex":
            est = dd.divdiff_simplex(f, lam)
            val, err = est.value, est.error
        elif route == "cone":
            if not isinstance(f, GaussianCombination):
                continue
            est = dd.divdiff_fourier_cone(f, lam, m=args.m, T=args.T)
            val, err = est.value, est.error
        else:
            raise UsageError(f"unknown route {route!r}")
        values[route] = complex(val)
        rows.append({"route": route, "re": val.real, "im": val.imag, "error_estimate": err})
    disc = max((abs(a - b) for a in values.values() for b in values.values()), default=0.0)
    rep.tables["divdiff"] = rows
    rep.outputs["max_discrepancy"] = disc
    rep.check("max_pairwise_discrepancy", disc, args.tol or 1e-4)


def cmd_moi(args, rep):
    f = parse_function(args.f)
    if args.H:
        h = load_matrix(args.H)
        xs = [load_complex_matrix(p) for p in (args.X or [])] or [np.asarray(load_matrix(args.V))]
    else:
        h = np.diag([0.0, 1.0])
        xs = [np.array([[0.0, 1.0], [1.0, 0.0]])]
    n = args.n or len(xs)
    if len(xs) == 1 and n > 1:
        xs = xs * n
    levels = parse_levels(args.levels)
    req = MoiRequest(DividedDifferenceSymbol(f, n), h, xs, method="dyadic",
                     m_min=levels[0], m_max=levels[-1], T=args.T)
    oracle = moi_spectral(req).value
    res = moi_dyadic(req, reference=oracle, strict=False)
    ref = float(np.linalg.norm(oracle))
    rows = [
        {"m": m, "norm_S": float(np.linalg.norm(s)), "error": e, "tail_bound": res.tail_bound}
        for m, s, e in zip(res.levels, res.sums, res.errors)
    ]
    rep.tables["moi"] = rows
    rel = res.errors[-1] / ref if ref > 0 else res.errors[-1]
    rep.outputs.update({"order": res.order, "final_rel_error": rel,
                        "extrapolated_rel_error": float(np.linalg.norm(res.extrapolated - oracle)) / max(ref, 1e-300)})
    rep.check("final_rel_error", rel, args.tol or 1e-3)
    if args.converge:
        rep.check("fitted_order", res.order, 0.9, kind="min")


def _rel(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), 1e-300))


def cmd_deriv(args, rep):
    f = parse_function(args.f)
    rows = []
    for i, rng in enumerate(trial_rngs(args.seed, args.trials, tag=1)):
        pair = _pair(args, rng, args.dim)
        a = np.asarray(gateaux_derivative_moi(f, pair, args.n))
        b = np.asarray(gateaux_derivative_fd(f, pair, args.n))
        row = {"trial": i, "moi_vs_fd": _rel(a, b)}
        if isinstance(f, RationalFunction) and len(f.terms) == 1:
            t = f.terms[0]
            c = t.c * resolvent_derivative(t.m, t.z, pair, args.n)
            row["moi_vs_resolvent"] = _rel(a, c)
        rows.append(row)
    rep.tables["deriv"] = rows
    rep.check("moi_vs_fd", max(r["moi_vs_fd"] for r in rows), args.tol or 1e-5)
    if "moi_vs_resolvent" in rows[0]:
        rep.check("moi_vs_resolvent", max(r["moi_vs_resolvent"] for r in rows), 1e-6)


def cmd_remainder(args, rep):
    f = parse_function(args.f)
    rng = trial_rngs(args.seed, 1, tag=2)[0]
    pair = _pair(args, rng, args.dim)
    scales = parse_floats(args.scales)
    norms = [float(np.linalg.norm(np.asarray(taylor_remainder(f, pair.scaled(s), args.n)), 2))
             for s in scales]
    rows = []
    for i, (s, r) in enumerate(zip(scales, norms)):
        ratio = norms[i - 1] / r if i and r > 0 else None
        rows.append({"s": s, "remainder_norm": r, "ratio_to_previous": ratio})
    rep.tables["remainder"] = rows
    target = 2.0**args.n
    ratios = [r["ratio_to_previous"] for r in rows[1:] if r["ratio_to_previous"] is not None]
    worst = max((abs(r / target - 1.0) for r in ratios), default=0.0)
    rep.outputs["expected_ratio"] = target
    rep.check("ratio_deviation", worst, args.tol or 0.25)


def cmd_ssf(args, rep):
    f = parse_function(args.f)
    rng = trial_rngs(args.seed, 1, tag=3)[0]
    pair = _pair(args, rng, args.dim)
    xi = krein_ssf(pair)
    rep.tables["ssf"] = list(xi.rows())
    res = krein_residual(f, pair, relative=True)
    tr = float(np.trace(np.asarray(pair.V)).real)
    integ = xi.integral()
    rep.outputs.update({"residual": res, "integral_xi": integ, "trace_V": tr})
    rep.check("krein_residual", res, args.tol or 1e-8)
    rep.check("integral_vs_trace", abs(integ - tr) / max(1.0, abs(tr)), 1e-10)


def cmd_cyclic(args, rep):
    f = parse_function(args.f)
    rows = []
    for i, rng in enumerate(trial_rngs(args.seed, args.trials, tag=4)):
        pair = _pair(args, rng, args.dim)
        rows.append({"trial": i, "residual": cyclic_identity_check(f, pair, args.n)})
    rep.tables["cyclic"] = rows
    rep.check("cyclic_residual", max(r["residual"] for r in rows), args.tol or 1e-9)


def cmd_scan(args, rep):
    f = parse_function(args.f)
    ideal = IdealSpec.parse(args.ideal) if args.ideal else WeakSchatten(args.n)
    res = estimate_scan(f, args.n, ideal, dims=parse_ints(args.dims), trials=args.trials,
                        seed=args.seed)
    rep.tables["scan"] = list(res.rows())
    rep.outputs.update({
        "trace_constant": res.trace_constant,
        "trace_growth": res.growth("trace"),
        "ideal": res.ideal,
        "convention": res.convention,
    })
    limit = args.tol or 2.0
    rep.check("trace_growth", res.growth("trace"), limit)
    if res.phi_ratios:
        rep.outputs.update({"phi_constant": res.phi_constant, "phi_growth": res.growth("phi")})
        rep.check("phi_growth", res.growth("phi"), limit)


def cmd_norms(args, rep):
    if args.matrix:
        a = load_complex_matrix(args.matrix)
    else:
        a = random_hermitian(args.dim, trial_rngs(args.seed, 1, tag=5)[0])
    specs = [IdealSpec.parse(s) for s in args.ideals.split(";")] if args.ideals else [
        Schatten(1), Schatten(2), Schatten(0.5), WeakSchatten(1), WeakSchatten(2),
        Lorentz(1, 2), DixmierMacaev(), DMConvex(2),
    ]
    rep.outputs["report"] = norm_report(a, specs, weak_powers=(1, 2)).to_json()


def cmd_propcheck(args, rep):
    res = quasinorm_property_suite(p=args.p, dim=args.dim, trials=args.trials, seed=args.seed,
                                   rtol=args.tol or 1e-12)
    rep.tables["violations"] = list(res.rows())
    rep.outputs["trials"] = res.trials
    rep.check("violations", res.count, 0)


def cmd_interp(args, rep):
    f = parse_function(args.f)

    def make_map(d, rng):
        h = gue(d, rng)
        def R(x1, x2):
            req = MoiRequest(DividedDifferenceSymbol(f, 2), h, [x1, x2])
            return moi_spectral(req).value
        return R

    res = interpolation_check(make_map, (2.0, 2.0, 1.0), dims=parse_ints(args.dims),
                              trials=args.trials, seed=args.seed)
    rep.tables["interp"] = [{"dim": d, "max_ratio": res.max_ratio[d]} for d in res.dims]
    rep.outputs["growth"] = res.growth
    rep.check("growth", res.growth, args.tol or 2.0)


COMMANDS = {
    "divdiff": (cmd_divdiff, "divided difference by every route"),
    "moi": (cmd_moi, "dyadic MOI convergence against the spectral value"),
    "deriv": (cmd_deriv, "MOI vs finite-difference (vs resolvent) derivatives"),
    "remainder": (cmd_remainder, "Taylor remainder scaling"),
    "ssf": (cmd_ssf, "spectral shift function and Krein residual"),
    "cyclic": (cmd_cyclic, "cyclic trace identity residuals"),
    "scan": (cmd_scan, "estimate-constant scan over dimensions"),
    "norms": (cmd_norms, "ideal norm report of one matrix"),
    "propcheck": (cmd_propcheck, "quasi-norm inequality suite"),
    "interp": (cmd_interp, "weak-type interpolation check for T_{f^[2]}"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default="specshift-out")
    common.add_argument("--tol", type=float, help="override the declared tolerance")
    common.add_argument("--levels", default="1..12")
    common.add_argument("--dims", default="8,16,32,64")
    common.add_argument("--trials", type=int, default=10)
    common.add_argument("--f", default="gaussian", help="function spec")
    common.add_argument("--n", type=int, default=None)
    common.add_argument("--dim", type=int, default=6)
    common.add_argument("--H", help="matrix file for H")
    common.add_argument("--V", help="matrix file for V")
    common.add_argument("--v-scale", type=float, default=1.0)

    parser = argparse.ArgumentParser(prog="specshift", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "divdiff":
            p.add_argument("--lambda", dest="lam", default="0,0.5,1")
            p.add_argument("--routes", default="all")
            p.add_argument("--m", type=int, default=10)
            p.add_argument("--T", type=float, default=16.0)
        elif name == "moi":
            p.add_argument("--X", action="append", help="argument matrix file (repeatable)")
            p.add_argument("--converge", action="store_true")
            p.add_argument("--T", type=float, default=16.0)
        elif name == "remainder":
            p.add_argument("--scales", default="0.2,0.1,0.05,0.025")
        elif name == "scan":
            p.add_argument("--ideal", default=None)
        elif name == "norms":
            p.add_argument("--matrix")
            p.add_argument("--ideals", help="';'-separated, e.g. 'Schatten(2);DMConvex(2)'")
        elif name == "propcheck":
            p.add_argument("--p", type=float, default=0.5)
    return parser


_DEFAULT_N = {"deriv": 2, "remainder": 2, "cyclic": 2, "scan": 2}
_PER_COMMAND = {"propcheck": {"dim": 4, "trials": 1000}, "ssf": {"dim": 20}}


def _resolve(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    defaults = dict(_PER_COMMAND.get(args.command, {}))
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        known = {a.dest for a in sub._actions}
        for key, val in cfg.items():
            dest = key.replace("-", "_")
            if dest == "lambda":
                dest = "lam"
            if dest not in known or dest in ("config", "help"):
                raise UsageError(f"unknown config key {key!r}")
            defaults[dest] = val
    if defaults:
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.n is None and args.command in _DEFAULT_N:
        args.n = _DEFAULT_N[args.command]
    if args.tol is not None and not args.tol > 0:
        raise UsageError("--tol must be positive")
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    return args


def run(argv=None, stdout=None):
    """Run one subcommand; returns ``(exit_code, report)``."""
    stdout = stdout or sys.stdout
    try:
        args = _resolve(argv)
    except UsageError as exc:
        print(f"specshift: usage error: {exc}", file=sys.stderr)
        return 2, None
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in ("command", "config", "out_dir")}
    rep = RunReport(command=args.command, config=config)
    fn = COMMANDS[args.command][0]
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            fn(args, rep)
        if caught:
            rep.outputs["warnings"] = sorted({str(w.message) for w in caught})
    except (UsageError, ValueError, TypeError) as exc:
        print(f"specshift: usage error: {exc}", file=sys.stderr)
        return 2, None
    rep.timings["total_seconds"] = time.perf_counter() - t0
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(rep, out / "report.json")
    (out / "timings.json").write_text(json.dumps(rep.timings) + "\n", encoding="utf-8")
    for name, table in rep.tables.items():
        write_csv(table, out / f"{name}.csv")
    for c in rep.checks:
        status = "PASS" if c["passed"] else "FAIL"
        op = "<=" if c["kind"] == "max" else ">="
        print(f"{status} {c['name']}: {c['value']:.3e} {op} {c['limit']:.3e}", file=stdout)
    if not rep.passed:
        failing = [c for c in rep.checks if not c["passed"]]
        print(json.dumps(failing, default=float, indent=2), file=stdout)
    print(f"report {out / 'report.json'} hash {rep.content_hash()[:16]}", file=stdout)
    return (0 if rep.passed else 1), rep


def main(argv=None):
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
