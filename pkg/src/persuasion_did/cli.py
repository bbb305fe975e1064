"""Command-line front end: estimate, bounds, boe, staggered, simulate.

Every command prints pretty JSON (or writes it with --out) that embeds the
resolved configuration and the library version. Exit codes: 0 success,
1 invalid input, 2 estimation failure; failures print {code, message, context}.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .boe import BoeInput, boe_summary, q_interval, q_interval_from_counts
from .bounds import aggregate_sharp_bounds
from .dataset import StaggeredSchema, TwoPeriodSchema, load_staggered_csv, load_two_period_csv
from . import errors
from .errors import EstimationError, PersuasionError, ValidationError
from .nuisance import EPS_TRIM, FoldPlan, Method, fit_nuisance
from .report import jsonable
from .sim import StaggeredDgp, StaggeredSuite, TwoPeriodSuite, dgp_from_dict, monte_carlo, oracle
from .staggered import espr, long_rows
from .twoperiod_reg import (aprt_from_fe, att_from_fe, fit_two_way_fe, gmm_iv, partial_out_covariates,
                            raprt_from_fe, type_shares)
from .twoperiod_semipar import (ESTIMATORS, Link, PsiEvaluator, estimate_did,
                                estimate_unconfoundedness_mode)

log = logging.getLogger("persuasion_did")

ALL_ESTIMATORS = ("fe", "gmm", "did", "pi", "pow", "dr")
ALL_TARGETS = ("aprt", "raprt")


# ------------------------------------------------------------------ helpers


def _csv_list(text: str | None) -> tuple[str, ...]:
    if not text:
        return ()
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _choices(text: str, allowed: tuple[str, ...], what: str) -> tuple[str, ...]:
    vals = tuple(v.lower() for v in _csv_list(text))
    bad = [v for v in vals if v not in allowed]
    if bad or not vals:
        raise ValidationError(errors.INVALID_ARGUMENT, f"unknown {what}", given=list(vals), allowed=list(allowed))
    return vals


def parse_horizons(text: str) -> list[int]:
    """'-2..2' or '0,1,3' (ranges may be mixed with commas)."""
    out: list[int] = []
    for part in _csv_list(text):
        if ".." in part:
            a, b = part.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValidationError(errors.INVALID_ARGUMENT, "empty horizon range", range=part)
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValidationError(errors.INVALID_ARGUMENT, "no horizons given")
    return sorted(set(out))


def _config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(jsonable(payload), indent=2, sort_keys=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _two_period(args):
    schema = TwoPeriodSchema(args.y0_col, args.y1_col, args.d_col, _csv_list(args.x_cols), args.cluster_col)
    return load_two_period_csv(args.input, schema)


def _folds(args):
    return FoldPlan(args.folds, args.seed) if args.folds else None


# ----------------------------------------------------------------- commands


def cmd_estimate(args) -> dict:
    estimators = _choices(args.estimators, ALL_ESTIMATORS, "estimator")
    targets = _choices(args.targets, ALL_TARGETS, "target")
    panel = _two_period(args)
    reg_panel = partial_out_covariates(panel) if args.partial_out else panel
    reports = []
    fe = None
    fit = None
    for name in estimators:
        for t in targets:
            if name == "fe":
                fe = fe or fit_two_way_fe(reg_panel)
                rep = (aprt_from_fe if t == "aprt" else raprt_from_fe)(fe, reg_panel, args.alpha)
            elif name == "gmm":
                rep = gmm_iv(reg_panel, t.upper(), args.alpha)
            elif args.mode == "unconfoundedness":
                rep = estimate_unconfoundedness_mode(panel, args.method, args.alpha, name, t.upper(),
                                                     _folds(args), args.eps_trim)
            else:
                if fit is None:
                    fit = fit_nuisance(panel, args.method, folds=_folds(args), eps_trim=args.eps_trim)
                if name == "did":
                    rep = estimate_did(panel, fit, t.upper(), args.alpha, args.link)
                else:
                    rep = ESTIMATORS[name](panel, fit, t.upper(), args.alpha)
            reports.append(rep.to_dict())
    att = att_from_fe(fit_two_way_fe(reg_panel), reg_panel, args.alpha)
    shares = type_shares(panel, att.point)
    return {"reports": reports, "att": att.to_dict(), "type_shares": shares.as_dict()}


def cmd_bounds(args) -> dict:
    panel = _two_period(args)
    fit = fit_nuisance(panel, args.method, folds=_folds(args), eps_trim=args.eps_trim)
    b = aggregate_sharp_bounds(panel, PsiEvaluator(fit, Link(args.link)))
    point = estimate_did(panel, fit, "APRT", args.alpha, args.link)
    return {"bounds": b.as_dict(), "did_aprt": point.to_dict()}


def cmd_boe(args) -> dict:
    alpha0 = args.alpha / 2 if args.alpha0 is None else args.alpha0
    q_level = 1 - alpha0 if args.q_level is None else args.q_level
    if args.q_successes is not None or args.q_n is not None:
        if args.q_successes is None or args.q_n is None:
            raise ValidationError(errors.INVALID_ARGUMENT, "--q-successes and --q-n go together")
        q_hat = args.q_successes / args.q_n
        ql, qu = q_interval_from_counts(args.q_successes, args.q_n, q_level)
        q = args.q if args.q is not None else q_hat
    elif args.q_lower is not None and args.q_upper is not None:
        ql, qu, q = args.q_lower, args.q_upper, args.q
    elif args.q is not None and args.q_n_treated is not None:
        ql, qu = q_interval(args.q, args.q_n_treated, q_level)
        q = args.q
    elif args.q is not None:
        ql = qu = q = args.q
    else:
        raise ValidationError(errors.INVALID_ARGUMENT, "give --q, --q-lower/--q-upper or --q-successes/--q-n")
    inp = BoeInput(args.att, args.se, ql, qu, q, args.alpha, args.alpha0)
    return {"q_interval": [ql, qu], "q": q, **boe_summary(inp)}


def _staggered_panel(args):
    schema = StaggeredSchema(_csv_list(args.y_cols), args.s_col, _csv_list(args.x_cols), args.cluster_col,
                             args.layout, args.unit_col, args.period_col, args.outcome_col)
    return load_staggered_csv(args.input, schema, args.infinity_token)


def cmd_staggered(args) -> tuple[dict, list[dict]]:
    panel = _staggered_panel(args)
    horizons = parse_horizons(args.horizons) if args.horizons else list(range(panel.T))
    if args.pretrend:
        horizons = sorted(set(horizons) | set(range(-panel.T, -1)))
    reports, skipped = [], []
    for j in horizons:
        pre = j <= -2
        try:
            reports.append(espr(panel, j, args.estimator.upper(), args.alpha, args.method, _folds(args),
                                args.eps_trim, pretrend=pre))
        except EstimationError as exc:
            if exc.code not in (errors.NO_ELIGIBLE_GROUPS, errors.HORIZON_OUT_OF_RANGE):
                raise
            skipped.append({"j": j, **exc.to_dict()})
    rows = long_rows(reports)
    return {"T": panel.T, "n": panel.n, "espr": [r.to_dict() for r in reports], "skipped": skipped}, rows


def _load_config(path: str) -> dict:
    p = Path(path)
    raw = p.read_bytes()
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(raw.decode("utf-8"))
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(errors.INVALID_ARGUMENT, "config is not valid JSON", detail=str(exc)) from exc


def cmd_simulate(args) -> tuple[dict, list[dict]]:
    cfg = _load_config(args.config)
    try:
        dgp = dgp_from_dict(cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(errors.INVALID_ARGUMENT, "malformed design description", detail=repr(exc)) from exc
    n = args.n or int(cfg.get("n", 2000))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    level = 1 - args.alpha
    orc = oracle(dgp)
    if isinstance(dgp, StaggeredDgp):
        hz = parse_horizons(args.horizons) if args.horizons else [0]
        suite = StaggeredSuite(tuple(hz), args.staggered_estimator.upper(), args.method, args.alpha)
    else:
        suite = TwoPeriodSuite(_choices(args.estimators, ALL_ESTIMATORS, "estimator"),
                               _choices(args.targets, ALL_TARGETS, "target"), args.method, args.alpha)
    truth = suite.truth(orc)
    res = monte_carlo(dgp, suite, n, args.reps, seed, truth, level, args.n_jobs)
    rows = []
    for name, s in res.items():
        for r, (pt, se) in enumerate(zip(s.estimates, s.ses)):
            rows.append({"rep": r, "name": name, "point": pt, "se": se})
    rows.sort(key=lambda r: (r["rep"], r["name"]))
    summary = {"n": n, "reps": args.reps, "seed": seed, "oracle": orc.as_dict(),
               "summary": {k: v.as_dict() for k, v in res.items()}}
    return summary, rows


# ------------------------------------------------------------------- parser


def _add_two_period(p):
    p.add_argument("--input", required=True)
    p.add_argument("--y0-col", default="y0")
    p.add_argument("--y1-col", default="y1")
    p.add_argument("--d-col", default="d1")
    p.add_argument("--x-cols", default="")
    p.add_argument("--cluster-col", default=None)


def _add_nuisance(p, default_method="LOGISTIC"):
    p.add_argument("--method", default=default_method, type=str.upper, choices=[m.value for m in Method])
    p.add_argument("--folds", type=int, default=0, help="cross-fitting folds (0 = none)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps-trim", type=float, default=EPS_TRIM)


def _add_common(p):
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="persuasion-did", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="two-period persuasion rates")
    _add_two_period(p)
    _add_nuisance(p)
    p.add_argument("--estimators", default=",".join(ALL_ESTIMATORS))
    p.add_argument("--targets", default=",".join(ALL_TARGETS))
    p.add_argument("--link", default="IDENTITY", type=str.upper, choices=[k.value for k in Link])
    p.add_argument("--mode", default="parallel", choices=["parallel", "unconfoundedness"])
    p.add_argument("--partial-out", action="store_true", help="residualize outcomes on X for fe/gmm")
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bounds", help="sharp bounds allowing backlash")
    _add_two_period(p)
    _add_nuisance(p)
    p.add_argument("--link", default="IDENTITY", type=str.upper, choices=[k.value for k in Link])
    _add_common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("boe", help="rates from a published ATT (no data needed)")
    p.add_argument("--att", type=float, required=True)
    p.add_argument("--se", type=float, required=True)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--q-lower", type=float, default=None)
    p.add_argument("--q-upper", type=float, default=None)
    p.add_argument("--q-successes", type=int, default=None)
    p.add_argument("--q-n", type=int, default=None)
    p.add_argument("--q-n-treated", type=int, default=None, help="with --q: Wald interval for q")
    p.add_argument("--q-level", type=float, default=None, help="level of the q interval (default 1 - alpha0)")
    p.add_argument("--alpha0", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_boe)

    p = sub.add_parser("staggered", help="event-study persuasion rates")
    p.add_argument("--input", required=True)
    p.add_argument("--layout", default="wide", choices=["wide", "long"])
    p.add_argument("--y-cols", default="")
    p.add_argument("--s-col", default="s")
    p.add_argument("--unit-col", default="unit")
    p.add_argument("--period-col", default="period")
    p.add_argument("--outcome-col", default="y")
    p.add_argument("--infinity-token", default="inf")
    p.add_argument("--x-cols", default="")
    p.add_argument("--cluster-col", default=None)
    p.add_argument("--horizons", default=None, help="e.g. -2..2 or 0,1")
    p.add_argument("--pretrend", action="store_true", help="add every pre-adoption horizon j <= -2")
    p.add_argument("--estimator", default="regression", choices=["regression", "dr"])
    _add_nuisance(p)
    p.add_argument("--format", default="json", choices=["json", "csv"])
    p.add_argument("--csv", default=None, help="also write the long CSV here")
    _add_common(p)
    p.set_defaults(func=cmd_staggered)

    p = sub.add_parser("simulate", help="Monte Carlo study of a described design")
    p.add_argument("--config", required=True, help="JSON or TOML design description")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--estimators", default=",".join(ALL_ESTIMATORS))
    p.add_argument("--targets", default=",".join(ALL_TARGETS))
    p.add_argument("--method", default="CELL_MEANS", type=str.upper, choices=[m.value for m in Method])
    p.add_argument("--horizons", default=None)
    p.add_argument("--staggered-estimator", default="regression", choices=["regression", "dr"])
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--per-rep-csv", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)
    return ap


def _rows_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if isinstance(v, float) and not np.isfinite(v) else v) for k, v in r.items()})
    return buf.getvalue()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    head = {"command": args.command, "version": __version__, "config": _config(args)}
    try:
        result = args.func(args)
    except PersuasionError as exc:
        sys.stdout.write(json.dumps(jsonable({**head, "error": exc.to_dict()}), indent=2) + "\n")
        return 1 if isinstance(exc, ValidationError) else 2
    rows = None
    if isinstance(result, tuple):
        result, rows = result
    if args.command == "staggered":
        text = _rows_csv(rows)
        if args.csv:
            Path(args.csv).write_text(text, encoding="utf-8")
        if args.format == "csv":
            sys.stdout.write(text)
            if args.out:
                _emit({**head, **result}, args.out)
            return 0
    if args.command == "simulate" and args.per_rep_csv:
        Path(args.per_rep_csv).write_text(_rows_csv(rows), encoding="utf-8")
    _emit({**head, **result}, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
