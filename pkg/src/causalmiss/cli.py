"""Command-line front end: select / estimate / simulate / accuracy.

Batch-oriented: every run is a pure function of the config file, flags, and
the input CSV. Results land in the output directory as diff-friendly CSV
tables and JSON documents. Exit codes: 0 success, 2 configuration/schema
error, 3 computation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bootstrap import bootstrap_effect, estimate_pair
from .config import RunConfig, merge_cli, parse_config_file
from .criteria import SplitPlan, fit_missingness, weighted_accuracy
from .data import ColumnSchema, load_csv, validate_positivity
from .errors import CausalmissError, ConfigError, DataError, FormulaError
from .estimators import MEAN_DIFFERENCE, RISK_RATIO, fit_ps
from .formula import parse_formula
from .imputation import impute
from .seeds import derive_rng, derive_seed
from .selection import (
    CandidatePool,
    evaluate_pool,
    select_best,
    select_sequential,
    table_pool,
)
from .simulation import (
    CRITERIA_KEYS,
    DgpConfig,
    run_replications,
    default_pool,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3


def _schema_from(config: RunConfig) -> ColumnSchema:
    covariates = tuple(config.get_list("covariates"))
    if not covariates:
        raise ConfigError("no covariates configured (set `covariates = X1, X2, ...`)")
    tokens = ("",)
    extra = config.get("missing_token")
    if extra is not None:
        tokens = ("", str(extra))
    return ColumnSchema(
        exposure=str(config.require("exposure")),
        outcome=str(config.require("outcome")),
        covariates=covariates,
        outcome_kind=str(config.get("outcome_kind")),
        missing_tokens=tokens,
    )


def _load_dataset(config: RunConfig):
    return load_csv(config.require("data"), _schema_from(config))


def _pool_from(config: RunConfig, data) -> CandidatePool:
    if config.imputation_models or config.ps_models:
        if not (config.imputation_models and config.ps_models):
            raise ConfigError("explicit pools need both imputation_model and ps_model lines")
        return CandidatePool(
            imputation_specs=tuple(parse_formula(f) for f in config.imputation_models),
            ps_specs=tuple(parse_formula(f) for f in config.ps_models),
        )
    roles = [config.get_list(k) for k in ("confounders", "exposure_related", "outcome_related")]
    if any(roles):
        return table_pool(data.exposure_name, data.outcome_name, *roles)
    raise ConfigError(
        "no candidate pool: give imputation_model/ps_model formulas or tag "
        "covariate roles (confounders / exposure_related / outcome_related)"
    )


def _estimand(config: RunConfig, data) -> str:
    value = config.get("estimand")
    if value is None:
        return RISK_RATIO if data.outcome_kind == "binary" else MEAN_DIFFERENCE
    if value not in (RISK_RATIO, MEAN_DIFFERENCE):
        raise ConfigError(f"unknown estimand {value!r}")
    return value


def _plan(config: RunConfig) -> SplitPlan:
    return SplitPlan(
        q=config.get_float("q", lo=0.0, hi=1.0),
        repeats=config.get_int("splits", minimum=1),
    )


def _outdir(config: RunConfig) -> Path:
    out = Path(config.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value)}")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)


def _write_candidates_csv(path: Path, reports, method: str) -> None:
    # the Table-6-shaped criterion grid; failures are reported in
    # diagnostics.json, keeping these columns fixed
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "imputation_spec", "ps_spec", "estimate", "accuracy_w", "out_bic",
            "asmd", "ks", "abic", "rank_score",
        ])
        for r in reports:
            est = r.estimates.get(method)
            writer.writerow([
                str(r.imputation_spec), str(r.ps_spec),
                _fmt(est.tau if est else None),
                _fmt(r.accuracy_w), _fmt(r.out_bic), _fmt(r.asmd), _fmt(r.ks),
                _fmt(r.abic), _fmt(r.rank_score if math.isfinite(r.rank_score) else None),
            ])


def run_select(config: RunConfig) -> int:
    data = _load_dataset(config)
    pool = _pool_from(config, data)
    pool.validate(data)
    method = str(config.get("method"))
    if method not in ("ipw", "dr"):
        raise ConfigError(f"method must be ipw or dr, got {method!r}")
    estimand = _estimand(config, data)
    seed = config.seed()
    m = config.get_int("m", minimum=1)
    out = _outdir(config)

    reports = evaluate_pool(
        data, pool, method, estimand=estimand, m=m, plan=_plan(config),
        seed=seed, tie_method=str(config.get("tie_method")),
    )
    _write_candidates_csv(out / "candidates.csv", reports, method)

    failures = {
        f"{r.imputation_spec} | {r.ps_spec}": r.status for r in reports if not r.ok
    }
    strategy = str(config.get("strategy", "rank_score"))
    if strategy not in ("rank_score", "sequential"):
        raise ConfigError(f"strategy must be rank_score or sequential, got {strategy!r}")
    try:
        chooser = select_best if strategy == "rank_score" else select_sequential
        best = chooser(reports)
    except CausalmissError:
        _write_json(out / "diagnostics.json", {"failures": failures})
        print("select: every candidate failed; partial results in", out, file=sys.stderr)
        return EXIT_COMPUTE

    best_imp_index = [str(s) for s in pool.imputation_specs].index(str(best.imputation_spec))
    imps = impute(data, best.imputation_spec, m, derive_seed(seed, "impute", best_imp_index))
    ps_fit = fit_ps(imps, best.ps_spec)
    positivity = validate_positivity(ps_fit.ps_values.ravel(), eps=float(config.get("eps")))
    miss = fit_missingness(data)

    est = best.estimates.get(method)
    _write_json(out / "selected.json", {
        "imputation_spec": str(best.imputation_spec),
        "ps_spec": str(best.ps_spec),
        "rank_score": best.rank_score,
        "accuracy_w": best.accuracy_w,
        "out_bic": best.out_bic,
        "asmd": best.asmd,
        "ks": best.ks,
        "abic": best.abic,
        "method": method,
        "estimand": estimand,
        "strategy": strategy,
        "estimate": {"tau": est.tau, "tau1": est.tau1, "tau0": est.tau0},
    })
    _write_json(out / "diagnostics.json", {
        "positivity": {
            "eps": positivity.eps,
            "n_checked": positivity.n_checked,
            "n_violations": positivity.n_violations,
            "violation_indices": list(positivity.violations[:200]),
        },
        "missingness_weights": {
            "w_hat_max": float(miss.w_hat.max()),
            "w_hat_min": float(miss.w_hat.min()),
            "n_clipped": miss.n_clipped,
        },
        "failures": failures,
    })
    print(f"selected: {best.imputation_spec} | {best.ps_spec} "
          f"(rank score {best.rank_score:g}, {method} estimate {est.tau:.4f})")
    return EXIT_OK


def run_estimate(config: RunConfig) -> int:
    data = _load_dataset(config)
    if len(config.imputation_models) != 1 or len(config.ps_models) != 1:
        raise ConfigError(
            "estimate needs exactly one imputation_model and one ps_model "
            "(the pair chosen by `select`)"
        )
    imp_spec = parse_formula(config.imputation_models[0])
    ps_spec = parse_formula(config.ps_models[0])
    method = str(config.get("method"))
    if method not in ("ipw", "dr"):
        raise ConfigError(f"method must be ipw or dr, got {method!r}")
    estimand = _estimand(config, data)
    out = _outdir(config)

    result = bootstrap_effect(
        data, imp_spec, ps_spec, method,
        estimand=estimand,
        m=config.get_int("m", minimum=1),
        B=config.get_int("B", minimum=2),
        seed=config.seed(),
        level=float(config.get("ci_level")),
    )
    point = estimate_pair(
        data, imp_spec, ps_spec, method, estimand,
        config.get_int("m", minimum=1), seed=derive_seed(config.seed(), "point"),
    )
    _write_json(out / "estimate.json", {
        "imputation_spec": str(imp_spec),
        "ps_spec": str(ps_spec),
        "method": method,
        "estimand": estimand,
        "estimate": {
            "tau": point.tau, "tau1": point.tau1, "tau0": point.tau0,
            "per_imputation": [list(t) for t in point.per_imputation],
        },
        "bootstrap": {
            "point": result.point,
            "bse": result.bse,
            "ci_normal": list(result.ci_normal),
            "ci_percentile": list(result.ci_percentile),
            "B": result.B,
            "B_effective": result.B_effective,
            "n_failed": result.n_failed,
            "level": result.level,
        },
    })
    lo, hi = result.ci_percentile
    print(f"{method} estimate {result.point:.4f}  BSE {result.bse:.4f}  "
          f"percentile CI ({lo:.4f}, {hi:.4f})")
    return EXIT_OK


def _coefs(config: RunConfig, key: str, default):
    raw = config.get_list(key)
    if not raw:
        return default
    try:
        return tuple(float(v) for v in raw)
    except ValueError:
        raise ConfigError(f"{key} must be a comma-separated list of numbers") from None


def run_simulate(config: RunConfig) -> int:
    method = str(config.get("method", "both"))
    if method == "both":
        methods = ("ipw", "dr")
    elif method in ("ipw", "dr"):
        methods = (method,)
    else:
        raise ConfigError(f"method must be ipw, dr, or both, got {method!r}")
    outcome_kind = str(config.get("outcome_kind"))
    cfg = DgpConfig(
        n=config.get_int("n", minimum=10),
        missingness_coefs=_coefs(config, "miss_coefs", (-0.3, 0.4, 0.6, 1.8)),
        treatment_coefs=_coefs(config, "treat_coefs", (-0.2, 0.3, 1.0, 0.0)),
        outcome_coefs=_coefs(
            config, "outcome_coefs",
            (-0.2, 2.0, -0.3, 0.0, 2.5),
        ),
        outcome_kind=outcome_kind,
        estimand=RISK_RATIO if outcome_kind == "binary" else MEAN_DIFFERENCE,
    )
    pool = default_pool() if not config.imputation_models else CandidatePool(
        imputation_specs=tuple(parse_formula(f) for f in config.imputation_models),
        ps_specs=tuple(parse_formula(f) for f in config.ps_models),
    )
    out = _outdir(config)
    summary = run_replications(
        cfg, pool, methods,
        n_replications=config.get_int("replications", minimum=2),
        m=config.get_int("m", minimum=1),
        plan=_plan(config),
        master_seed=config.seed(),
        workers=config.get_int("workers", minimum=1),
    )

    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "method", "imputation_spec", "ps_spec", "bias", "bias_rate", "ese",
            "rmse", "n_used", "n_excluded", "mean_accuracy_w", "mean_out_bic",
            "mean_asmd", "mean_ks", "mean_abic", "mean_rank_score",
        ])
        for c in summary.candidates:
            writer.writerow([
                c.method, c.imputation, c.ps, _fmt(c.bias), _fmt(c.bias_rate),
                _fmt(c.ese), _fmt(c.rmse), c.n_used, c.n_excluded,
                *(_fmt(c.means[k]) for k in CRITERIA_KEYS),
            ])

    with open(out / "correlations.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["criterion", *(m.upper() for m in methods)])
        keys = next(iter(summary.correlations.values())).keys()
        for key in keys:
            writer.writerow(
                [key, *(_fmt(summary.correlations[m][key]) for m in methods)]
            )

    records = summary.records
    with open(out / "raw_replicates.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "replication", "imputation_spec", "ps_spec",
            *(f"tau_{m}" for m in methods), *CRITERIA_KEYS, "status",
        ])
        for j in range(records.n_replications):
            for c, (imp, ps) in enumerate(records.candidates):
                writer.writerow([
                    j, imp, ps,
                    *(_fmt(records.tau[m][j, c]) for m in methods),
                    *(_fmt(records.criteria[k][j, c]) for k in CRITERIA_KEYS),
                    records.failures.get((j, c), "ok"),
                ])

    print(f"simulate: true tau {summary.true_tau:.4f}; "
          f"{records.n_replications} replications x {len(records.candidates)} candidates -> {out}")
    n_failures = len(records.failures)
    if n_failures:
        print(f"simulate: {n_failures} candidate-replication failures recorded", file=sys.stderr)
    any_ok = any(c.n_used > 0 for c in summary.candidates)
    return EXIT_OK if any_ok else EXIT_COMPUTE


def run_accuracy(config: RunConfig) -> int:
    data = _load_dataset(config)
    if not config.imputation_models:
        raise ConfigError("accuracy needs at least one imputation_model line")
    specs = [parse_formula(f) for f in config.imputation_models]
    miss = fit_missingness(data)
    plan = _plan(config)
    seed = config.seed()
    out = _outdir(config)
    results = {}
    for i, spec in enumerate(specs):
        results[str(spec)] = weighted_accuracy(
            data, spec, plan, miss, derive_rng(seed, "accuracy", i)
        )
        print(f"accuracy_w  {results[str(spec)]:.4f}  {spec}")
    _write_json(out / "accuracy.json", {
        "q": plan.resolve_q(data),
        "splits": plan.repeats,
        "accuracy_w": results,
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalmiss",
        description="Causal effect estimation and model selection with a "
                    "missing binary exposure",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("select", "evaluate the candidate pool and pick the best pair by rank score"),
        ("estimate", "bootstrap the effect estimate for a fixed pair"),
        ("simulate", "run the Monte Carlo study and emit summary tables"),
        ("accuracy", "standalone weighted-accuracy evaluation of imputation models"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key-value config file")
        p.add_argument("--data", help="input CSV path")
        p.add_argument("--exposure", help="exposure column name")
        p.add_argument("--outcome", help="outcome column name")
        p.add_argument("--covariates", help="comma-separated covariate columns")
        p.add_argument("--outcome-kind", dest="outcome_kind",
                       choices=("binary", "continuous"))
        p.add_argument("--missing-token", dest="missing_token",
                       help="extra missing sentinel besides the empty field")
        p.add_argument("--method",
                       choices=("ipw", "dr", "both") if name == "simulate"
                       else ("ipw", "dr"))
        p.add_argument("--estimand", choices=(RISK_RATIO, MEAN_DIFFERENCE))
        p.add_argument("--m", type=int, help="number of imputations")
        p.add_argument("--q", type=float, help="test fraction for weighted accuracy")
        p.add_argument("--splits", type=int, help="weighted-accuracy split repeats")
        p.add_argument("--B", type=int, help="bootstrap replicates")
        p.add_argument("--seed", type=int, help="master seed (required)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="parallel workers")
        p.add_argument("--tie-method", dest="tie_method", choices=("mid", "min"))
        p.add_argument("--strategy", choices=("rank_score", "sequential"),
                       help="selection rule (default rank_score)")
        p.add_argument("--imputation", action="append",
                       help="imputation model formula (repeatable)")
        p.add_argument("--ps", action="append", help="PS model formula (repeatable)")
        if name == "simulate":
            p.add_argument("--n", type=int, help="sample size per replication")
            p.add_argument("--replications", type=int, help="number of replications")
    return parser


COMMANDS = {
    "select": run_select,
    "estimate": run_estimate,
    "simulate": run_simulate,
    "accuracy": run_accuracy,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = parse_config_file(args.config) if args.config else RunConfig()
        config = merge_cli(config, args)
        return COMMANDS[args.command](config)
    except (ConfigError, DataError, FormulaError, OSError) as exc:
        # schema and formula problems surface before any computation starts
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CausalmissError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
