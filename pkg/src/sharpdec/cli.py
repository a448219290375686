"""Command-line front end.

Exit codes: 0 all requested checks pass, 1 a check fails, 2 bad configuration,
3 the run would exceed the node budget.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from .experiments import HypothesisError, fit_exponent, run_campaign
from .extension import BudgetExceeded, evaluate, make_plan
from .geometry import Params
from .records import (ConfigError, ResultRecord, RunConfig, cache_lookup, cache_store,
                      config_hash, write_csv)

log = logging.getLogger("sharpdec")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3

_SUBCOMMAND_CAMPAIGNS = {
    "amplitude": ("amplitude",),
    "decouple": ("decoupling",),
    "corollary": ("corollary",),
}


def _float_list(text: str) -> list[float]:
    return [float(eval_power(v)) for v in text.replace(";", ",").split(",") if v.strip()]


def eval_power(tok: str) -> float:
    """Accept plain numbers and powers written as 2^10 or 2**10."""
    tok = tok.strip().replace("**", "^")
    if "^" in tok:
        base, exp = tok.split("^", 1)
        return float(base) ** float(exp)
    return float(tok)


def _add_run_flags(sp: argparse.ArgumentParser):
    sp.add_argument("--config", help="JSON run configuration")
    sp.add_argument("--R", dest="R_list", type=_float_list, help="comma separated scales, e.g. 2^8,2^9")
    sp.add_argument("--d", type=int)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--out", help="output directory for JSON records and CSV tables")
    sp.add_argument("--no-cache", action="store_true")
    sp.add_argument("--budget", type=float, help="maximum phase evaluations")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--quad-order", dest="quad_order", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sharpdec", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("amplitude", "decouple", "corollary", "sweep"):
        _add_run_flags(sub.add_parser(name, help=f"run the {name} campaign" if name != "sweep"
                                      else "run every campaign listed in the config"))

    ev = sub.add_parser("eval", help="evaluate g at space-time points")
    ev.add_argument("--d", type=int, default=2)
    ev.add_argument("--sigma", type=float, default=0.25)
    ev.add_argument("--R", type=eval_power, default=256.0)
    ev.add_argument("--quad-order", dest="quad_order", type=int, default=8)
    ev.add_argument("--point", action="append", default=[],
                    help="comma separated coordinates (x_1,...,x_{d-1},t); repeatable")
    ev.add_argument("--points-file", help="CSV file, one point per row")

    fit = sub.add_parser("fit", help="fit a power law to R,value rows")
    fit.add_argument("--input", required=True, help="CSV with columns R,value")
    fit.add_argument("--predicted", type=float, required=True)
    fit.add_argument("--tol", type=float, default=0.05)
    fit.add_argument("--eps-slack", dest="eps_slack", type=float, default=0.0)

    cache = sub.add_parser("cache", help="inspect or clear the result cache")
    cache.add_argument("action", choices=("list", "clear", "path"))
    cache.add_argument("--cache-dir")
    return ap


def _run_config(args) -> RunConfig:
    doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    for key in ("R_list", "d", "sigma", "budget", "seed", "quad_order", "out"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    if args.no_cache:
        doc["use_cache"] = False
    if args.command in _SUBCOMMAND_CAMPAIGNS:
        doc["campaigns"] = list(_SUBCOMMAND_CAMPAIGNS[args.command])
    return RunConfig.from_dict(doc)


def _run_campaigns(rc: RunConfig) -> int:
    sweep = rc.sweep
    root = rc.cache_root()
    out = Path(rc.out)
    records = []
    for name in sweep.campaigns:
        digest = config_hash(sweep, name)
        rec = cache_lookup(root, digest) if rc.use_cache else None
        if rec is not None:
            log.info("%s: cache hit %s", name, digest[:12])
        else:
            t0 = time.perf_counter()
            rep = run_campaign(name, sweep)
            rec = ResultRecord.from_report(rep, sweep, time.perf_counter() - t0)
            if rc.use_cache:
                cache_store(root, rec)
        records.append(rec)
        stem = f"{name}_d{sweep.d}_s{sweep.sigma:g}_{digest[:12]}"
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.json").write_text(rec.to_json())
        write_csv(out / f"{stem}.csv", [rec])
        _summarise(rec)
    if len(records) > 1:
        write_csv(out / "sweep.csv", records)
    return EXIT_OK if all(r.passed for r in records) else EXIT_FAIL


def _summarise(rec: ResultRecord):
    print(f"[{'PASS' if rec.passed else 'FAIL'}] {rec.campaign} ({rec.config_hash[:12]})")
    for name, fit in rec.report["fits"].items():
        print(f"    fit {name:<10} slope {fit['slope']:+.4f}  predicted {fit['predicted']:+.4f}"
              f"  {'ok' if fit['passed'] else 'FAIL'}")
    for name, chk in rec.report["checks"].items():
        print(f"    check {name:<14} {chk['value']:.4g} (limit {chk['limit']:.4g})"
              f"  {'ok' if chk['passed'] else 'FAIL'}")


def _cmd_eval(args) -> int:
    p = Params(args.d, args.sigma, args.R, quad_order=args.quad_order)
    pts = [[float(v) for v in s.split(",")] for s in args.point]
    if args.points_file:
        pts += np.loadtxt(args.points_file, delimiter=",", ndmin=2).tolist()
    if not pts:
        raise ConfigError("no evaluation points given")
    pts = np.asarray(pts, dtype=float)
    if pts.shape[1] != p.d:
        raise ConfigError(f"points need {p.d} coordinates")
    radius = max(p.R, float(np.max(np.linalg.norm(pts, axis=1))))
    vals = evaluate(make_plan(p, radius=radius), pts)
    w = csv.writer(sys.stdout)
    w.writerow([f"x{j + 1}" for j in range(p.d - 1)] + ["t", "re", "im", "abs"])
    for x, v in zip(pts, vals):
        w.writerow([format(c, ".17g") for c in x] +
                   [format(v.real, ".17g"), format(v.imag, ".17g"), format(abs(v), ".17g")])
    return EXIT_OK


def _cmd_fit(args) -> int:
    try:
        with open(args.input, newline="") as fh:
            rows = list(csv.DictReader(fh))
        Rs = [float(r["R"]) for r in rows]
        vals = [float(r["value"]) for r in rows]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from None
    fit = fit_exponent(Rs, vals, args.predicted, args.tol, args.eps_slack)
    print(f"slope {fit.slope:.6f}")
    print(f"intercept {fit.intercept:.6f}")
    print(f"max_residual {fit.max_residual:.3g}")
    print(f"predicted {fit.predicted:.6f} pass {fit.passed}")
    return EXIT_OK if fit.passed else EXIT_FAIL


def _cmd_cache(args) -> int:
    rc = RunConfig.from_dict({"cache_dir": args.cache_dir} if args.cache_dir else {})
    root = rc.cache_root()
    if args.action == "path":
        print(root)
    elif args.action == "list":
        for f in sorted(root.glob("*.json")) if root.exists() else []:
            print(f.name)
    else:
        if root.exists():
            shutil.rmtree(root)
        print(f"cleared {root}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    logging.getLogger("sharpdec").setLevel(logging.INFO)
    try:
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "cache":
            return _cmd_cache(args)
        return _run_campaigns(_run_config(args))
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget refusal: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except HypothesisError as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
