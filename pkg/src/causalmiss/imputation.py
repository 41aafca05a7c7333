"""Multiple imputation of the missing binary exposure under MAR.

With a single incomplete variable, chained equations collapse to one
conditional model, so each completion is: fit the logistic imputation model
on the observed-exposure rows, perturb the coefficients with a draw from
their asymptotic normal distribution, and draw Bernoulli exposures for the
missing rows from the perturbed model (the standard `logreg` imputation
method). The observed-row fit is done once and shared across the m draws;
per-completion variability comes entirely from the coefficient and Bernoulli
draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import CompletedDataset, Dataset
from .errors import DataError, FormulaError
from .formula import ModelSpec, design_matrix, predictor_matrix
from .glm import FittedGlm, draw_coefficients, fit_glm
from .seeds import derive_seed

MIN_EXTRA_ROWS = 5   # observed rows required beyond the parameter count


@dataclass(frozen=True)
class ImputationSet:
    completions: tuple[CompletedDataset, ...]
    imputation_spec: ModelSpec
    seeds: tuple[int, ...]
    fit: FittedGlm

    @property
    def m(self) -> int:
        return len(self.completions)

    @property
    def base(self) -> Dataset:
        return self.completions[0].base


def check_imputation_spec(spec: ModelSpec, data: Dataset) -> None:
    if spec.response != data.exposure_name:
        raise FormulaError(
            f"imputation model must have the exposure {data.exposure_name!r} "
            f"as its response, got {spec.response!r}"
        )
    allowed = set(data.covariate_names) | {data.outcome_name}
    unknown = [p for p in spec.predictors if p not in allowed]
    if unknown:
        raise FormulaError(f"imputation predictors not in the data: {unknown}")


def impute(data: Dataset, spec: ModelSpec, m: int, seed: int) -> ImputationSet:
    """Produce m completions of the exposure.

    Completion j is driven by a seed derived from (seed, j), so any subset of
    completions is reproducible independently of m.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    check_imputation_spec(spec, data)
    n_obs = data.n - data.n_missing
    k = len(spec.predictors) + 1
    if n_obs < k + MIN_EXTRA_ROWS:
        raise DataError(
            f"only {n_obs} observed-exposure rows for a {k}-parameter imputation model"
        )

    X_obs, y_obs = design_matrix(spec, data)
    fit = fit_glm(X_obs, y_obs, "logistic", spec=spec)

    missing_rows = np.flatnonzero(data.missing_indicator == 1)
    X_mis = predictor_matrix(spec, data, missing_rows)

    completions = []
    seeds = []
    for j in range(1, m + 1):
        child = derive_seed(seed, "imp", j)
        seeds.append(child)
        rng = np.random.default_rng(child)
        filled = data.exposure.copy()
        if missing_rows.size:
            beta_star = draw_coefficients(fit, rng)
            p = expit(X_mis @ beta_star)
            filled[missing_rows] = (rng.random(missing_rows.size) < p).astype(float)
        completions.append(
            CompletedDataset(base=data, exposure_imputed=filled, imputation_index=j)
        )
    return ImputationSet(
        completions=tuple(completions),
        imputation_spec=spec,
        seeds=tuple(seeds),
        fit=fit,
    )
