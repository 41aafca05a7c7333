"""Bootstrap uncertainty for a fixed (imputation, PS) pair.

Each replicate resamples rows with replacement and reruns the full pipeline:
fresh imputations, PS fits, estimation, and pooling. Model selection is NOT
re-run inside the loop; the bootstrap conditions on the pair chosen from the
original data (re-selection per replicate is available as a flag for
sensitivity analysis).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import BootstrapFailure, CausalmissError
from .estimators import (
    EffectEstimate,
    dr_estimate,
    fit_outcome_model,
    fit_ps,
    ipw_estimate,
    pool_rubin,
)
from .formula import ModelSpec
from .imputation import impute
from .seeds import derive_seed

MAX_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    bse: float
    ci_normal: tuple[float, float]
    ci_percentile: tuple[float, float]
    B: int
    B_effective: int
    replicates: np.ndarray
    n_failed: int
    level: float = 0.95


def estimate_pair(data: Dataset, imputation_spec: ModelSpec, ps_spec: ModelSpec,
                  method: str, estimand: str, m: int, seed: int) -> EffectEstimate:
    """One full impute -> PS -> estimate -> pool pass for a fixed pair."""
    imps = impute(data, imputation_spec, m, seed)
    ps_fit = fit_ps(imps, ps_spec)
    per_imp = []
    for j, completion in enumerate(imps.completions):
        ps = ps_fit.ps_values[j]
        if method == "ipw":
            per_imp.append(ipw_estimate(completion, ps, estimand))
        elif method == "dr":
            out_fit = fit_outcome_model(completion, ps_spec)
            per_imp.append(dr_estimate(completion, ps, out_fit, estimand))
        else:
            raise ValueError(f"unknown method {method!r}")
    return pool_rubin(per_imp, estimand, method=method)


def percentile_interval(replicates: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """Ceiling order statistics at the tail probabilities.

    With B effective replicates and alpha = 1 - level, the endpoints are the
    ceil(alpha/2 * B)-th and ceil((1 - alpha/2) * B)-th order statistics
    (1-indexed), which makes the interval invariant under duplicating the
    replicate list.
    """
    sorted_reps = np.sort(replicates)
    b = sorted_reps.size
    alpha = 1.0 - level
    # the 1e-9 guard keeps float noise in alpha from bumping the ceiling a rank
    lo_index = max(int(np.ceil(alpha / 2.0 * b - 1e-9)), 1)
    hi_index = max(int(np.ceil((1.0 - alpha / 2.0) * b - 1e-9)), 1)
    return float(sorted_reps[lo_index - 1]), float(sorted_reps[hi_index - 1])


def _normal_z(level: float) -> float:
    if level == 0.95:
        return 1.96
    from scipy.stats import norm

    return float(norm.ppf(1.0 - (1.0 - level) / 2.0))


def bootstrap_effect(data: Dataset, imputation_spec: ModelSpec, ps_spec: ModelSpec,
                     method: str = "ipw", *, estimand: str | None = None,
                     m: int = 20, B: int = 2000, seed: int = 0,
                     level: float = 0.95, reselect_pool=None) -> BootstrapResult:
    """Resample-with-replacement bootstrap of the full pipeline.

    The default conditions on the pair selected from the original data.
    Passing `reselect_pool` re-runs selection inside every replicate instead
    (a sensitivity analysis for selection uncertainty; much slower).
    Replicates that fail (separation, undefined ratio, ...) are dropped with
    a count; more than 10% failures aborts with a diagnostic.
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    if estimand is None:
        estimand = "risk_ratio" if data.outcome_kind == "binary" else "mean_difference"

    point = estimate_pair(
        data, imputation_spec, ps_spec, method, estimand, m,
        seed=derive_seed(seed, "point"),
    ).tau

    replicates = []
    n_failed = 0
    n = data.n
    for b in range(B):
        child = derive_seed(seed, "boot", b)
        rng = np.random.default_rng(child)
        rows = rng.integers(0, n, size=n)
        try:
            resample = data.take(rows)
            pair = (imputation_spec, ps_spec)
            if reselect_pool is not None:
                from .selection import evaluate_pool, select_best

                best = select_best(evaluate_pool(
                    resample, reselect_pool, method, estimand=estimand, m=m,
                    seed=derive_seed(child, "select"),
                ))
                pair = (best.imputation_spec, best.ps_spec)
            est = estimate_pair(
                resample, pair[0], pair[1], method, estimand, m,
                seed=derive_seed(child, "est"),
            )
            replicates.append(est.tau)
        except CausalmissError:
            n_failed += 1
    if n_failed > MAX_FAILURE_FRACTION * B:
        raise BootstrapFailure(
            f"{n_failed}/{B} bootstrap replicates failed; the pipeline is too "
            "unstable on resamples of this dataset for a trustworthy interval"
        )

    reps = np.asarray(replicates)
    bse = float(np.std(reps, ddof=1))
    z = _normal_z(level)
    return BootstrapResult(
        point=float(point),
        bse=bse,
        ci_normal=(float(point - z * bse), float(point + z * bse)),
        ci_percentile=percentile_interval(reps, level),
        B=B,
        B_effective=reps.size,
        replicates=reps,
        n_failed=n_failed,
        level=level,
    )
