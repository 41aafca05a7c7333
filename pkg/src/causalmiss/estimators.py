"""Propensity-score fitting and causal-effect estimation on completed data.

Estimands: the causal risk ratio tau1/tau0 for a binary outcome and the mean
difference tau1 - tau0 for a continuous one. Per-completion estimates are
pooled across imputations: ratios on the log scale (geometric mean), mean
differences on the raw scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CompletedDataset
from .errors import FormulaError, PoolingScaleError, RatioUndefined
from .formula import ModelSpec, design_matrix, imputed_name, predictor_matrix
from .glm import FittedGlm, fit_glm, predict_mean
from .imputation import ImputationSet

PS_CLIP = 1e-6                      # fitted propensities kept inside (0, 1)

RISK_RATIO = "risk_ratio"
MEAN_DIFFERENCE = "mean_difference"
ESTIMANDS = (RISK_RATIO, MEAN_DIFFERENCE)


@dataclass(frozen=True)
class PsFit:
    spec: ModelSpec
    ps_values: np.ndarray             # (m, n), clipped to (PS_CLIP, 1 - PS_CLIP)
    per_completion_fits: tuple[FittedGlm, ...]

    @property
    def m(self) -> int:
        return self.ps_values.shape[0]


@dataclass(frozen=True)
class EffectEstimate:
    estimand: str
    method: str                       # "ipw" | "dr"
    tau1: float
    tau0: float
    tau: float
    per_imputation: tuple[tuple[float, float, float], ...]
    pooled_variance: float | None = None


def check_ps_spec(spec: ModelSpec, data) -> None:
    base = getattr(data, "base", data)
    expected = (imputed_name(base.exposure_name), base.exposure_name)
    if spec.response not in expected:
        raise FormulaError(
            f"PS model must have the imputed exposure {expected[0]!r} as its "
            f"response, got {spec.response!r}"
        )
    if base.outcome_name in spec.predictors:
        raise FormulaError("the outcome may not appear in a PS model")
    unknown = [p for p in spec.predictors if p not in base.covariate_names]
    if unknown:
        raise FormulaError(f"PS predictors not among the covariates: {unknown}")


def fit_ps(imps: ImputationSet, spec: ModelSpec) -> PsFit:
    """One logistic PS fit per completion; fitted probabilities clipped."""
    check_ps_spec(spec, imps.base)
    fits = []
    ps = np.empty((imps.m, imps.base.n))
    for j, completion in enumerate(imps.completions):
        X, y = design_matrix(spec, completion)
        fit = fit_glm(X, y, "logistic", spec=spec)
        fits.append(fit)
        ps[j] = predict_mean(fit, X)
    np.clip(ps, PS_CLIP, 1.0 - PS_CLIP, out=ps)
    return PsFit(spec=spec, ps_values=ps, per_completion_fits=tuple(fits))


def _combine(tau1: float, tau0: float, estimand: str) -> float:
    if estimand == RISK_RATIO:
        if tau0 == 0.0:
            raise RatioUndefined("tau0 is zero; the risk ratio is undefined")
        return tau1 / tau0
    if estimand == MEAN_DIFFERENCE:
        return tau1 - tau0
    raise ValueError(f"unknown estimand {estimand!r}")


def ipw_estimate(completion: CompletedDataset, ps, estimand: str):
    """Inverse-probability-weighted arm means and their combination."""
    ps = np.asarray(ps, dtype=float)
    a = completion.exposure_imputed
    y = completion.base.outcome
    if ps.shape != a.shape:
        raise ValueError("propensity vector length mismatch")
    if np.any(ps <= 0.0) or np.any(ps >= 1.0):
        raise ValueError("propensity values must lie strictly inside (0, 1)")
    n = a.shape[0]
    tau1 = float(np.sum(a * y / ps) / n)
    tau0 = float(np.sum((1.0 - a) * y / (1.0 - ps)) / n)
    return tau1, tau0, _combine(tau1, tau0, estimand)


def outcome_model_spec(data, ps_spec: ModelSpec, covariates=None) -> ModelSpec:
    """Outcome model Y ~ A_imp + covariates (defaults to the PS model's set)."""
    base = getattr(data, "base", data)
    covs = tuple(ps_spec.predictors) if covariates is None else tuple(covariates)
    return ModelSpec(
        response=base.outcome_name,
        predictors=(imputed_name(base.exposure_name),) + covs,
    )


def fit_outcome_model(completion: CompletedDataset, ps_spec: ModelSpec,
                      covariates=None) -> FittedGlm:
    spec = outcome_model_spec(completion, ps_spec, covariates)
    X, y = design_matrix(spec, completion)
    family = "logistic" if completion.base.outcome_kind == "binary" else "linear"
    return fit_glm(X, y, family, spec=spec)


def dr_estimate(completion: CompletedDataset, ps, outcome_fit: FittedGlm, estimand: str):
    """Doubly robust (AIPW) arm means: IPW terms plus outcome-model augmentation.

    The augmentation evaluates the single outcome model Y ~ A_imp + X at
    exposure 1 (m1) and exposure 0 (m0) row-wise:

        tau1 = mean[ A*Y/ps - (A - ps)/ps * m1 ]       (= mean[m1 + A*(Y - m1)/ps])
        tau0 = mean[ (1-A)*Y/(1-ps) - (ps - A)/(1-ps) * m0 ]

    so each arm stays consistent when either the PS model or the outcome
    model is correct.
    """
    ps = np.asarray(ps, dtype=float)
    a = completion.exposure_imputed
    y = completion.base.outcome
    if np.any(ps <= 0.0) or np.any(ps >= 1.0):
        raise ValueError("propensity values must lie strictly inside (0, 1)")

    X_out = predictor_matrix(outcome_fit.spec, completion)
    a_col = 1 + outcome_fit.spec.predictors.index(
        imputed_name(completion.base.exposure_name)
    )
    X1 = X_out.copy()
    X1[:, a_col] = 1.0
    m1 = predict_mean(outcome_fit, X1)
    X1[:, a_col] = 0.0
    m0 = predict_mean(outcome_fit, X1)

    tau1 = float(np.mean(a * y / ps - (a - ps) / ps * m1))
    tau0 = float(np.mean((1.0 - a) * y / (1.0 - ps) - (ps - a) / (1.0 - ps) * m0))
    return tau1, tau0, _combine(tau1, tau0, estimand)


def pool_rubin(per_imputation, estimand: str, method: str = "",
               within_variances=None, log_scale_ratio: bool = True) -> EffectEstimate:
    """Pool per-imputation (tau1, tau0, tau) triples with Rubin's Rules.

    Risk ratios pool on the log scale by default (raw-scale pooling is
    available for sensitivity analysis); mean differences pool on the raw
    scale. The Rubin variance W + (1 + 1/m) B is reported on the pooling
    scale only when within-imputation variances are supplied; otherwise it is
    omitted and the bootstrap provides uncertainty.
    """
    triples = [tuple(float(v) for v in t) for t in per_imputation]
    m = len(triples)
    if m == 0:
        raise ValueError("no per-imputation estimates to pool")
    arr = np.asarray(triples)

    use_log = estimand == RISK_RATIO and log_scale_ratio
    if use_log:
        if np.any(arr <= 0.0):
            raise PoolingScaleError(
                "log-scale pooling requires strictly positive tau1, tau0, tau"
            )
        pooled_scale = np.log(arr)
    else:
        pooled_scale = arr
    center = pooled_scale.mean(axis=0)
    pooled = np.exp(center) if use_log else center
    tau1, tau0, _ = (float(v) for v in pooled)
    tau = _combine(tau1, tau0, estimand)

    variance = None
    if within_variances is not None:
        within = np.asarray(within_variances, dtype=float)
        if within.shape != (m,):
            raise ValueError("need one within-imputation variance per imputation")
        between = float(np.var(pooled_scale[:, 2], ddof=1)) if m > 1 else 0.0
        variance = float(within.mean()) + (1.0 + 1.0 / m) * between

    return EffectEstimate(
        estimand=estimand,
        method=method,
        tau1=tau1,
        tau0=tau0,
        tau=tau,
        per_imputation=tuple(triples),
        pooled_variance=variance,
    )
