"""Candidate-pair enumeration, end-to-end evaluation, and selection.

A candidate pool is the Cartesian product of imputation specs and PS specs.
Each pair is imputed, fit, and scored on all six criteria; the rank-score and
ABIC passes are pool-level. The best pair is the rank-score minimizer with a
documented tiebreak (higher accuracy, then lower BIC, then enumeration
order). Per-candidate failures are recorded without aborting the pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .criteria import (
    CandidateReport,
    SplitPlan,
    abic,
    asmd,
    fit_missingness,
    ks_statistic,
    rank_score,
    weighted_accuracy,
)
from .data import Dataset
from .errors import AllCandidatesFailed, CausalmissError, FormulaError
from .estimators import (
    dr_estimate,
    fit_outcome_model,
    fit_ps,
    ipw_estimate,
    pool_rubin,
)
from .formula import ModelSpec, imputed_name
from .glm import bic as glm_bic
from .imputation import check_imputation_spec, impute
from .seeds import derive_rng, derive_seed

METHODS = ("ipw", "dr")


@dataclass(frozen=True)
class CandidatePool:
    imputation_specs: tuple[ModelSpec, ...]
    ps_specs: tuple[ModelSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "imputation_specs", tuple(self.imputation_specs))
        object.__setattr__(self, "ps_specs", tuple(self.ps_specs))
        if not self.imputation_specs or not self.ps_specs:
            raise ValueError("candidate pool must contain at least one spec of each kind")

    @property
    def pairs(self):
        return [
            (imp, ps) for imp in self.imputation_specs for ps in self.ps_specs
        ]

    def validate(self, data: Dataset) -> None:
        for spec in self.imputation_specs:
            check_imputation_spec(spec, data)
        imp_response = imputed_name(data.exposure_name)
        for spec in self.ps_specs:
            if spec.response not in (imp_response, data.exposure_name):
                raise FormulaError(
                    f"PS spec response must be {imp_response!r}, got {spec.response!r}"
                )
            if data.outcome_name in spec.predictors:
                raise FormulaError("PS specs may not include the outcome")
            unknown = [p for p in spec.predictors if p not in data.covariate_names]
            if unknown:
                raise FormulaError(f"PS predictors not among the covariates: {unknown}")


def table_pool(exposure_name: str, outcome_name: str, confounders,
               exposure_related, outcome_related) -> CandidatePool:
    """Build the standard five-imputation / four-PS candidate grid.

    Given covariates tagged by role (confounders, exposure-related,
    outcome-related), enumerates: imputation models Exp, Out, Covs, Res, Full
    and PS models Naive, Exp, Out, Covs.
    """
    conf = tuple(confounders)
    exp_rel = tuple(exposure_related)
    out_rel = tuple(outcome_related)
    if not conf:
        raise ValueError("at least one confounder is required")
    a, y = exposure_name, outcome_name
    imps = (
        ModelSpec(a, conf + exp_rel),                          # exposure-related
        ModelSpec(a, conf + out_rel),                          # outcome-related
        ModelSpec(a, conf + exp_rel + out_rel),                # covariates-included
        ModelSpec(a, conf + exp_rel + (y,)),                   # response-included
        ModelSpec(a, conf + exp_rel + out_rel + (y,)),         # full
    )
    a_imp = imputed_name(a)
    pss = (
        ModelSpec(a_imp, conf),                                # naive
        ModelSpec(a_imp, conf + exp_rel),                      # exposure-related
        ModelSpec(a_imp, conf + out_rel),                      # outcome-related
        ModelSpec(a_imp, conf + exp_rel + out_rel),            # covariates-included
    )
    return CandidatePool(imputation_specs=imps, ps_specs=pss)


def _methods_tuple(method) -> tuple[str, ...]:
    methods = (method,) if isinstance(method, str) else tuple(method)
    for name in methods:
        if name not in METHODS:
            raise ValueError(f"unknown method {name!r}; expected 'ipw' or 'dr'")
    return methods


def evaluate_pool(data: Dataset, pool: CandidatePool, method="ipw", *,
                  estimand: str | None = None, m: int = 20,
                  plan: SplitPlan | None = None, seed: int = 0,
                  tie_method: str = "mid") -> list[CandidateReport]:
    """Impute, fit, estimate, and score every candidate pair.

    Deterministic under a fixed seed: imputation draws and accuracy splits
    are derived per imputation spec, so results do not depend on evaluation
    order. The weighted accuracy is computed once per distinct imputation
    spec and shared across its PS variants; the outcome model is fit once per
    (pair, completion) and reused for both the BIC criterion and the DR
    augmentation.
    """
    methods = _methods_tuple(method)
    if estimand is None:
        estimand = "risk_ratio" if data.outcome_kind == "binary" else "mean_difference"
    plan = plan or SplitPlan()
    pool.validate(data)
    miss = fit_missingness(data)

    reports: list[CandidateReport] = []
    for i, imp_spec in enumerate(pool.imputation_specs):
        try:
            imps = impute(data, imp_spec, m, derive_seed(seed, "impute", i))
            acc = weighted_accuracy(
                data, imp_spec, plan, miss, derive_rng(seed, "accuracy", i)
            )
        except CausalmissError as exc:
            for ps_spec in pool.ps_specs:
                reports.append(CandidateReport(
                    imputation_spec=imp_spec, ps_spec=ps_spec,
                    status=f"imputation failed: {exc}", method=methods[0],
                ))
            continue
        for ps_spec in pool.ps_specs:
            reports.append(_evaluate_candidate(
                imps, imp_spec, ps_spec, acc, methods, estimand,
            ))

    reports = abic(reports)
    reports = rank_score(reports, tie_method=tie_method)
    return reports


def _evaluate_candidate(imps, imp_spec, ps_spec, acc, methods, estimand) -> CandidateReport:
    report = CandidateReport(
        imputation_spec=imp_spec, ps_spec=ps_spec,
        accuracy_w=acc, method=methods[0],
    )
    try:
        ps_fit = fit_ps(imps, ps_spec)
        bics, asmds, kss = [], [], []
        per_imp = {name: [] for name in methods}
        for j, completion in enumerate(imps.completions):
            ps = ps_fit.ps_values[j]
            out_fit = fit_outcome_model(completion, ps_spec)
            bics.append(glm_bic(out_fit))
            asmds.append(asmd(completion, ps))
            kss.append(ks_statistic(completion, ps))
            if "ipw" in per_imp:
                per_imp["ipw"].append(ipw_estimate(completion, ps, estimand))
            if "dr" in per_imp:
                per_imp["dr"].append(dr_estimate(completion, ps, out_fit, estimand))
        report.out_bic = float(np.mean(bics))
        report.asmd = float(np.mean(asmds))
        report.ks = float(np.mean(kss))
        report.estimates = {
            name: pool_rubin(per_imp[name], estimand, method=name)
            for name in methods
        }
    except CausalmissError as exc:
        report.status = f"{type(exc).__name__}: {exc}"
    return report


def select_best(reports) -> CandidateReport:
    """Rank-score minimizer; ties break to higher accuracy, then lower BIC,
    then enumeration order."""
    live = [r for r in reports if r.ok]
    if not live:
        raise AllCandidatesFailed("every candidate in the pool failed")
    best = live[0]
    for r in live[1:]:
        if (r.rank_score, -r.accuracy_w, r.out_bic) < (
            best.rank_score, -best.accuracy_w, best.out_bic
        ):
            best = r
    return best


def select_sequential(reports) -> CandidateReport:
    """Two-stage alternative: best imputation model by accuracy first, then
    the best PS model by outcome BIC given that imputation model.

    Cheaper than ranking every pair but conditions the PS choice on stage
    one, so it can miss the jointly best pair; non-default for that reason.
    """
    live = [r for r in reports if r.ok]
    if not live:
        raise AllCandidatesFailed("every candidate in the pool failed")
    best_acc = max(r.accuracy_w for r in live)
    stage_two = [r for r in live if r.accuracy_w == best_acc]
    best = stage_two[0]
    for r in stage_two[1:]:
        if r.out_bic < best.out_bic:
            best = r
    return best
