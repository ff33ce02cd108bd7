"""Command-line surface.

Four subcommands: ``estimate`` (panel or repeated cross sections),
``simulate`` (the benchmark grid), ``event-study`` (staggered
adoption), and ``check-relevance`` (instrument diagnostics).  A JSON
config file supplies defaults; flags override config keys of the same
name.  Results are emitted as JSON with every numeric field finite or
null alongside a reason string.

Exit codes: 0 success, 2 invalid data or configuration, 3 estimation
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import dataio, events, inference, rc, simulation
from .alt import att_serial_uncorr, att_timevarying, fit_serial_uncorr, fit_timevarying
from .errors import DataError, EstimationError, SpecMismatch
from .panel import AttSeries, ModelSpec, att_series, check_relevance, estimate_gamma1
from .inference import bootstrap_att, overid_report, pretest_wald

__all__ = ["main", "build_parser"]


def _finite(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def _num_map(d: dict | None) -> dict | None:
    if d is None:
        return None
    return {str(k): _finite(v) for k, v in d.items()}


def _add_schema_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--outcome-col", default=None)
    p.add_argument("--period-col", default=None)
    p.add_argument("--treated-col", default=None)
    p.add_argument("--unit-col", default=None)
    p.add_argument("--group-col", default=None)
    p.add_argument("--covariates", default=None,
                   help="comma-separated column names (default: every non-role column)")


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--x-cols", default=None,
                   help="comma-separated z column indices with period-varying effects (0 = intercept)")
    p.add_argument("--w-cols", default=None,
                   help="comma-separated z column indices with time-invariant effects")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ifeatt",
        description="Treatment effects under an interactive trend in untreated outcomes",
    )
    parser.add_argument("--config", default=None, help="JSON config file; flags override")
    sub = parser.add_subparsers(dest="command")

    pe = sub.add_parser("estimate", help="fit one dataset")
    pe.add_argument("--data", default=None)
    pe.add_argument("--design", choices=["panel", "rc"], default=None)
    pe.add_argument("--estimator", choices=["ife", "did", "lt", "t3", "t4"], default=None)
    pe.add_argument("--t-star", type=int, default=None)
    pe.add_argument("--bootstrap", type=int, default=None)
    pe.add_argument("--seed", type=int, default=None)
    pe.add_argument("--out", default=None)
    _add_schema_flags(pe)
    _add_spec_flags(pe)

    ps = sub.add_parser("simulate", help="run the benchmark grid or one cell")
    ps.add_argument("--cell", default=None, help="e.g. F3=1,rho=1,n=1000")
    ps.add_argument("--n", type=int, default=None)
    ps.add_argument("--reps", type=int, default=None)
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--estimators", default=None, help="comma-separated, default ife,did,lt")
    ps.add_argument("--format", choices=["text", "csv"], default=None)
    ps.add_argument("--out", default=None)

    pv = sub.add_parser("event-study", help="staggered adoption, aggregated by event time")
    pv.add_argument("--data", default=None)
    pv.add_argument("--estimator", choices=["ife", "did", "lt", "t3"], default=None)
    pv.add_argument("--never-value", type=int, default=None)
    pv.add_argument("--min-group-size", type=int, default=None)
    pv.add_argument("--bootstrap", type=int, default=None)
    pv.add_argument("--seed", type=int, default=None)
    pv.add_argument("--out", default=None)
    _add_schema_flags(pv)
    _add_spec_flags(pv)

    pr = sub.add_parser("check-relevance", help="instrument strength diagnostics")
    pr.add_argument("--data", default=None)
    pr.add_argument("--t-star", type=int, default=None)
    pr.add_argument("--cond-threshold", type=float, default=None)
    pr.add_argument("--out", default=None)
    _add_schema_flags(pr)
    _add_spec_flags(pr)

    return parser


def _merge(args: argparse.Namespace, config: dict, key: str, default=None):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    return config.get(key, default)


def _parse_cols(value) -> tuple[int, ...] | None:
    if value is None:
        return None
    if isinstance(value, str):
        value = [v for v in value.split(",") if v != ""]
    return tuple(int(v) for v in value)


def _schema_from(args: argparse.Namespace, config: dict, data_path=None) -> dataio.ColumnSchema:
    base = dict(config.get("schema", {}))
    flag_map = {
        "outcome_col": "outcome",
        "period_col": "period",
        "treated_col": "treated",
        "unit_col": "unit",
        "group_col": "group",
    }
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            base[key] = v
    cov = getattr(args, "covariates", None)
    if cov is not None:
        base["covariates"] = tuple(c for c in cov.split(",") if c != "")
    if "covariates" in base:
        base["covariates"] = tuple(base["covariates"])
    schema = dataio.ColumnSchema.from_dict(base)
    if "covariates" not in base and data_path is not None:
        schema = dataio.ColumnSchema.from_dict(
            dict(base, covariates=dataio.infer_covariates(data_path, schema))
        )
    return schema


def _model_spec(args, config) -> ModelSpec | None:
    x_cols = _parse_cols(_merge(args, config, "x_cols"))
    w_cols = _parse_cols(_merge(args, config, "w_cols"))
    if w_cols is None:
        return None
    return ModelSpec(x_cols=x_cols or (), w_cols=w_cols)


def _series_payload(series, boot) -> dict:
    out = {
        "periods": sorted(series.att),
        "estimates": _num_map(series.att),
        "pre_periods": list(series.pre_periods),
        "post_periods": list(series.post_periods),
        "n": series.n,
    }
    if boot is not None:
        out["ses"] = _num_map(boot.se)
        out["cis"] = {str(t): [_finite(a), _finite(b)] for t, (a, b) in boot.ci_percentile.items()}
        out["ci_kind"] = "bootstrap percentile 95%"
        out["bootstrap"] = {"b": boot.b, "n_failed": boot.n_failed}
    elif series.variance is not None:
        ses = {t: series.se(t) for t in series.att}
        out["ses"] = _num_map(ses)
        out["cis"] = {
            str(t): [_finite(series.att[t] - 1.96 * ses[t]), _finite(series.att[t] + 1.96 * ses[t])]
            for t in series.att
        }
        out["ci_kind"] = "normal 95%"
    else:
        out["ses"] = None
        out["cis"] = None
        out["ses_reason"] = "no analytic variance for this estimator; pass --bootstrap B"
    return out


def _cmd_estimate(args, config) -> dict:
    data_path = _merge(args, config, "data")
    if data_path is None:
        raise SpecMismatch("estimate needs --data")
    design = _merge(args, config, "design", "panel")
    estimator = _merge(args, config, "estimator", "ife")
    t_star = _merge(args, config, "t_star")
    if t_star is None:
        raise SpecMismatch("estimate needs --t-star")
    t_star = int(t_star)
    b = int(_merge(args, config, "bootstrap", 0) or 0)
    seed = int(_merge(args, config, "seed", 0) or 0)
    schema = _schema_from(args, config, data_path)
    spec = _model_spec(args, config)

    out = {"command": "estimate", "design": design, "estimator": estimator,
           "data": str(data_path), "t_star": t_star}

    if design == "rc":
        if estimator != "ife":
            raise SpecMismatch(f"repeated cross sections support only ife, got {estimator}")
        data = dataio.load_rc_csv(data_path, schema, t_star)
        if spec is None:
            raise SpecMismatch("ife needs --w-cols (and --x-cols for the rest)")
        series = rc.estimate_att_rc(data, spec)
        fit, _ = rc.fit_rc(data, spec)
        boot = bootstrap_att(data, spec, "ife-rc", b=b, seed=seed) if b else None
        out.update(_series_payload(series, boot))
        rep = overid_report(fit)
        out["j_test"] = {"stat": _finite(rep.j_stat), "dof": rep.dof,
                         "pvalue": _finite(rep.pvalue), "label": rep.label}
        out["pretest"] = None
        out["pretest_reason"] = "pre-test needs a joint covariance; bootstrap route does not carry one"
        return out

    if estimator == "t4":
        data = dataio.load_tv_panel_csv(data_path, schema, t_star)
        series = att_timevarying(data, fit_timevarying(data))
        boot = bootstrap_att(data, None, "t4", b=b, seed=seed) if b else None
        out.update(_series_payload(series, boot))
        out["j_test"] = None
        out["j_test_reason"] = "per-period exactly identified fits carry no joint J statistic"
        out["pretest"] = None
        out["pretest_reason"] = "bootstrap route carries no joint covariance"
        return out

    data = dataio.load_panel_csv(data_path, schema, t_star)
    if estimator == "ife":
        if spec is None:
            raise SpecMismatch("ife needs --w-cols (and --x-cols for the rest)")
        fit, params = estimate_gamma1(data, spec)
        series = att_series(params, fit, data)
        boot = bootstrap_att(data, spec, "ife-panel", b=b, seed=seed) if b else None
        out.update(_series_payload(series, boot))
        rep = overid_report(fit)
        out["j_test"] = {"stat": _finite(rep.j_stat), "dof": rep.dof,
                         "pvalue": _finite(rep.pvalue), "label": rep.label}
        if series.pre_periods:
            w = pretest_wald(series)
            out["pretest"] = {"stat": _finite(w.statistic), "dof": w.dof,
                              "pvalue": _finite(w.pvalue), "periods": list(w.periods)}
        else:
            out["pretest"] = None
            out["pretest_reason"] = "no pre-treatment periods in [3, t*)"
        report = check_relevance(data, spec)
        out["diagnostics"] = _relevance_payload(report)
        return out

    if estimator == "t3":
        series = att_serial_uncorr(data, fit_serial_uncorr(data))
        boot = bootstrap_att(data, None, "t3", b=b, seed=seed) if b else None
        out.update(_series_payload(series, boot))
        out["j_test"] = None
        out["j_test_reason"] = "per-period fits are reported without a joint J statistic"
        out["pretest"] = None
        out["pretest_reason"] = "bootstrap route carries no joint covariance"
        return out

    # did / lt
    point = inference.point_estimates(data, None, estimator)
    boot = bootstrap_att(data, None, estimator, b=b, seed=seed) if b else None
    series = AttSeries(
        att=point, variance=None, joint_cov=None,
        pre_periods=tuple(t for t in sorted(point) if t < t_star),
        post_periods=tuple(t for t in sorted(point) if t >= t_star),
        n=data.n,
    )
    out.update(_series_payload(series, boot))
    out["j_test"] = None
    out["j_test_reason"] = "comparator estimators have no overidentifying restrictions"
    out["pretest"] = None
    out["pretest_reason"] = "bootstrap route carries no joint covariance"
    return out


def _relevance_payload(report) -> dict:
    return {
        "relevance": {
            "rank": report.rank,
            "needed": report.needed,
            "cond": _finite(report.cond),
            "cond_is_inf": not math.isfinite(report.cond),
            "flagged": bool(report.flagged),
            "threshold": report.threshold,
            "first_stage": {
                str(j): {"coef": _finite(c), "se": _finite(s)}
                for j, (c, s) in report.coefficients.items()
            },
        }
    }


def _parse_cell(text: str) -> dict:
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise SpecMismatch(f"bad --cell entry {part!r}; use key=value")
        k, v = part.split("=", 1)
        k = k.strip().lower()
        if k not in {"f3", "rho", "n"}:
            raise SpecMismatch(f"unknown --cell key {k!r}; use f3, rho, n")
        out[k] = float(v) if k != "n" else int(v)
    return out


def _cmd_simulate(args, config) -> dict:
    reps = int(_merge(args, config, "reps", 1000))
    seed = int(_merge(args, config, "seed", simulation.DEFAULT_SEED))
    n = int(_merge(args, config, "n", 1000))
    fmt = _merge(args, config, "format", "text")
    est = _merge(args, config, "estimators", "ife,did,lt")
    if isinstance(est, str):
        est = tuple(e for e in est.split(",") if e)
    cell = _merge(args, config, "cell")
    if cell:
        kv = _parse_cell(cell) if isinstance(cell, str) else dict(cell)
        cfgs = [simulation.SimConfig(
            n=int(kv.get("n", n)), reps=reps,
            f3=float(kv.get("f3", 1.0)), rho=float(kv.get("rho", 0.5)), seed=seed,
        )]
    else:
        cfgs = simulation.default_grid(n=n, reps=reps, seed=seed)
    result = simulation.run_grid(cfgs, tuple(est))
    table = simulation.emit_table(result, fmt)
    return {"command": "simulate", "format": fmt, "table": table,
            "cells": json.loads(_cells_json(result))}


def _cells_json(result) -> str:
    rows = [
        {"estimator": c.estimator, "f3": c.f3, "rho": c.rho, "n": c.n,
         "reps": c.reps, "bias": _finite(c.bias), "rmse": _finite(c.rmse),
         "mad": _finite(c.mad), "failed_reps": c.failed_reps}
        for c in result.cells
    ]
    return json.dumps(rows)


def _cmd_event_study(args, config) -> dict:
    data_path = _merge(args, config, "data")
    if data_path is None:
        raise SpecMismatch("event-study needs --data")
    schema = _schema_from(args, config, data_path)
    never = int(_merge(args, config, "never_value", 0))
    estimator = _merge(args, config, "estimator", "ife")
    estimator_id = {"ife": "ife-panel"}.get(estimator, estimator)
    spec = _model_spec(args, config)
    min_size = int(_merge(args, config, "min_group_size", 10))
    b = int(_merge(args, config, "bootstrap", 0) or 0)
    seed = int(_merge(args, config, "seed", 0) or 0)

    data = dataio.load_multigroup_csv(data_path, schema, never_value=never)
    res = events.group_time_event_study(
        data, spec, estimator_id, min_group_size=min_size, b=b, seed=seed
    )
    out = {
        "command": "event-study",
        "estimator": estimator,
        "groups": list(res.groups),
        "n": res.n,
        "event_times": sorted(res.estimate),
        "estimates": _num_map(res.estimate),
        "weights": {str(e): _num_map(w) for e, w in res.weights.items()},
        "by_group": {str(g): _num_map(a) for g, a in res.by_group.items()},
    }
    if res.se is None:
        out["ses"] = None
        out["ses_reason"] = "pass --bootstrap B for standard errors"
    else:
        out["ses"] = _num_map(res.se)
        out["bootstrap"] = {"b": res.b}
    return out


def _cmd_check_relevance(args, config) -> dict:
    data_path = _merge(args, config, "data")
    if data_path is None:
        raise SpecMismatch("check-relevance needs --data")
    t_star = _merge(args, config, "t_star")
    if t_star is None:
        raise SpecMismatch("check-relevance needs --t-star")
    schema = _schema_from(args, config, data_path)
    spec = _model_spec(args, config)
    if spec is None:
        raise SpecMismatch("check-relevance needs --w-cols")
    thr = _merge(args, config, "cond_threshold")
    data = dataio.load_panel_csv(data_path, schema, int(t_star))
    report = (
        check_relevance(data, spec, cond_threshold=float(thr))
        if thr is not None
        else check_relevance(data, spec)
    )
    out = {"command": "check-relevance", "n": data.n}
    out.update(_relevance_payload(report))
    return out


_COMMANDS = {
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "event-study": _cmd_event_study,
    "check-relevance": _cmd_check_relevance,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {}
    if args.config:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            print(f"error: cannot read config: {e}", file=sys.stderr)
            return 2
    command = args.command or config.get("command")
    if command not in _COMMANDS:
        parser.print_usage(sys.stderr)
        print("error: no command given", file=sys.stderr)
        return 2
    try:
        result = _COMMANDS[command](args, config)
    except DataError as e:
        print(f"error: invalid input: {e}", file=sys.stderr)
        return 2
    except EstimationError as e:
        print(f"error: estimation failed: {e}", file=sys.stderr)
        return 3

    text = json.dumps(result, indent=2, sort_keys=True)
    out_path = getattr(args, "out", None) or config.get("out")
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    if command == "simulate" and result.get("format") == "text":
        print(result["table"])
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
