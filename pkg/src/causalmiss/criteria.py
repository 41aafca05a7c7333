"""Model-evaluation criteria for (imputation, PS) candidate pairs.

Six criteria are computed per candidate: the inverse-weighted imputation
accuracy on held-out observed rows, the BIC of the outcome model implied by
the PS covariate set, two covariate-balance statistics (ASMD and the weighted
two-sample KS distance), and the two combined criteria built from accuracy
and BIC: the min-max rescaled average (ABIC) and the rank score. Smaller is
better for everything except the accuracy itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .data import CompletedDataset, Dataset
from .errors import DataError, SeparationDetected
from .estimators import EffectEstimate, fit_outcome_model
from .formula import MISSING_ROLE, ModelSpec, design_matrix, predictor_matrix
from .glm import FittedGlm, bic, draw_coefficients, fit_glm
from .imputation import MIN_EXTRA_ROWS, ImputationSet, check_imputation_spec

W_HAT_CLIP = 1.0 - 1e-6      # upper clip so 1/(1 - w_hat) stays finite
DEFAULT_SPLITS = 10


@dataclass(frozen=True)
class SplitPlan:
    """Train/test split policy for the weighted-accuracy criterion.

    `q` is the test fraction of the observed rows (defaults to the observed
    missing rate when None). `repeats` independent splits are averaged; a
    caller wanting the literal one-split procedure can pass a frozen `delta`
    with repeats=1.
    """

    q: float | None = None
    repeats: int = DEFAULT_SPLITS
    delta: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.q is not None and not (0.0 < self.q < 1.0):
            raise ValueError("q must lie in (0, 1)")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.delta is not None and self.repeats != 1:
            raise ValueError("a frozen delta requires repeats=1")

    def resolve_q(self, data: Dataset) -> float:
        q = self.q if self.q is not None else data.missing_rate
        if not (0.0 < q < 1.0):
            raise ValueError(f"test ratio q={q} must lie in (0, 1)")
        return q

    def validate_delta(self, data: Dataset) -> np.ndarray:
        delta = np.asarray(self.delta, dtype=np.int8)
        if delta.shape != (data.n,):
            raise ValueError("delta length mismatch")
        if np.any((delta == 1) & (data.missing_indicator == 1)):
            raise ValueError("delta selects rows whose exposure is missing")
        return delta


@dataclass(frozen=True)
class MissingnessFit:
    """Full missingness model R ~ covariates + outcome with fitted w_hat."""

    fit: FittedGlm
    w_hat: np.ndarray
    n_clipped: int


def fit_missingness(data: Dataset) -> MissingnessFit:
    spec = ModelSpec(
        response=MISSING_ROLE,
        predictors=tuple(data.covariate_names) + (data.outcome_name,),
    )
    X, y = design_matrix(spec, data)
    fit = fit_glm(X, y, "logistic", spec=spec)
    w_raw = expit(X @ fit.coefficients)
    w_hat = np.minimum(w_raw, W_HAT_CLIP)
    return MissingnessFit(fit=fit, w_hat=w_hat, n_clipped=int((w_raw > W_HAT_CLIP).sum()))


def _draw_test_rows(observed: np.ndarray, n_test: int, rng) -> np.ndarray:
    return rng.choice(observed, size=n_test, replace=False)


def weighted_accuracy(data: Dataset, imputation_spec: ModelSpec, plan: SplitPlan,
                      miss: MissingnessFit, rng: np.random.Generator) -> float:
    """Inverse-weighted held-out imputation accuracy, averaged over splits.

    Each split fits the imputation model on the observed rows left out of the
    test set, imputes the test rows with a single posterior coefficient draw,
    and scores agreement with the known exposure, weighting each test row by
    1/(1 - w_hat) and normalizing by n*q (n = total sample size). A split
    whose training fit hits separation is redrawn once before the error
    propagates.
    """
    check_imputation_spec(imputation_spec, data)
    observed = data.observed_rows
    n_obs = observed.size
    q = plan.resolve_q(data)
    n_test = int(round(q * n_obs))
    k = len(imputation_spec.predictors) + 1
    if n_test < k + MIN_EXTRA_ROWS or (n_obs - n_test) < k + MIN_EXTRA_ROWS:
        raise DataError(
            f"split of {n_obs} observed rows at q={q:.3f} leaves too few rows "
            f"for a {k}-parameter imputation model"
        )

    inv_w = 1.0 / (1.0 - miss.w_hat)
    denom = data.n * q
    exposure = data.exposure

    totals = []
    for s in range(plan.repeats):
        if plan.delta is not None:
            test_rows = np.flatnonzero(plan.validate_delta(data) == 1)
            if test_rows.size != n_test:
                raise ValueError("frozen delta size disagrees with round(q * n_obs)")
        else:
            test_rows = _draw_test_rows(observed, n_test, rng)
        for attempt in (0, 1):
            train_rows = np.setdiff1d(observed, test_rows, assume_unique=False)
            X_train = predictor_matrix(imputation_spec, data, train_rows)
            try:
                fit = fit_glm(X_train, exposure[train_rows], "logistic", spec=imputation_spec)
                break
            except SeparationDetected:
                if attempt == 1 or plan.delta is not None:
                    raise
                test_rows = _draw_test_rows(observed, n_test, rng)
        X_test = predictor_matrix(imputation_spec, data, test_rows)
        beta_star = draw_coefficients(fit, rng)
        p = expit(X_test @ beta_star)
        a_imp = (rng.random(n_test) < p).astype(float)
        agree = (exposure[test_rows] == a_imp).astype(float)
        totals.append(float(np.sum(inv_w[test_rows] * agree) / denom))
    return float(np.mean(totals))


def benchmark_accuracy(data: Dataset, truth_exposure, imputation_spec: ModelSpec,
                       rng: np.random.Generator, draws: int = 1) -> float:
    """Imputation accuracy against known exposures, every row re-imputed.

    Only usable in simulations where the unmasked exposure vector is
    available; this estimates the same population accuracy the weighted
    accuracy targets, so the two should agree asymptotically when the
    missingness model is correct.
    """
    truth = np.asarray(truth_exposure, dtype=float)
    X_obs, y_obs = design_matrix(imputation_spec, data)
    fit = fit_glm(X_obs, y_obs, "logistic", spec=imputation_spec)
    X_all = predictor_matrix(imputation_spec, data)
    accs = []
    for _ in range(draws):
        beta_star = draw_coefficients(fit, rng)
        p = expit(X_all @ beta_star)
        a_imp = (rng.random(data.n) < p).astype(float)
        accs.append(float(np.mean(a_imp == truth)))
    return float(np.mean(accs))


def outcome_bic(imps: ImputationSet, ps_spec: ModelSpec, covariates=None) -> float:
    """Mean BIC of the outcome model Y ~ A_imp + PS covariates across completions."""
    values = [
        bic(fit_outcome_model(completion, ps_spec, covariates))
        for completion in imps.completions
    ]
    return float(np.mean(values))


def _group_weights(a: np.ndarray, ps: np.ndarray):
    exposed = a == 1.0
    w_exposed = 1.0 / ps[exposed]
    w_control = 1.0 / (1.0 - ps[~exposed])
    return exposed, w_exposed, w_control


def asmd(completion: CompletedDataset, ps, covariate_names=None,
         per_covariate: bool = False):
    """Absolute standardized mean difference after IPW weighting.

    Per covariate: |weighted exposed mean - weighted control mean| divided by
    the unweighted SD of the covariate over the whole completion. Returns the
    mean across covariates (or the per-covariate dict).
    """
    ps = np.asarray(ps, dtype=float)
    base = completion.base
    names = tuple(covariate_names) if covariate_names is not None else base.covariate_names
    exposed, w1, w0 = _group_weights(completion.exposure_imputed, ps)
    if not w1.size or not w0.size:
        raise DataError("a completion has an empty exposure arm")
    values = {}
    for name in names:
        x = base.covariates[:, base.covariate_names.index(name)]
        sd = float(np.std(x, ddof=1))
        if sd == 0.0:
            raise DataError(f"covariate {name!r} is constant; ASMD undefined")
        mean1 = float(np.sum(w1 * x[exposed]) / np.sum(w1))
        mean0 = float(np.sum(w0 * x[~exposed]) / np.sum(w0))
        values[name] = abs(mean1 - mean0) / sd
    if per_covariate:
        return values
    return float(np.mean(list(values.values())))


def _weighted_ks(x1, w1, x0, w0) -> float:
    # sup |F1 - F0| over the pooled jump points, weights normalized per group
    order1 = np.argsort(x1, kind="mergesort")
    order0 = np.argsort(x0, kind="mergesort")
    s1, c1 = x1[order1], np.cumsum(w1[order1]) / np.sum(w1)
    s0, c0 = x0[order0], np.cumsum(w0[order0]) / np.sum(w0)
    grid = np.concatenate([s1, s0])
    f1 = np.concatenate([[0.0], c1])[np.searchsorted(s1, grid, side="right")]
    f0 = np.concatenate([[0.0], c0])[np.searchsorted(s0, grid, side="right")]
    return float(np.abs(f1 - f0).max())


def ks_statistic(completion: CompletedDataset, ps, covariate_names=None,
                 per_covariate: bool = False):
    """Weighted two-sample KS distance between exposure arms, mean over covariates."""
    ps = np.asarray(ps, dtype=float)
    base = completion.base
    names = tuple(covariate_names) if covariate_names is not None else base.covariate_names
    exposed, w1, w0 = _group_weights(completion.exposure_imputed, ps)
    if not w1.size or not w0.size:
        raise DataError("a completion has an empty exposure arm")
    values = {}
    for name in names:
        x = base.covariates[:, base.covariate_names.index(name)]
        values[name] = _weighted_ks(x[exposed], w1, x[~exposed], w0)
    if per_covariate:
        return values
    return float(np.mean(list(values.values())))


@dataclass
class CandidateReport:
    """Everything known about one (imputation, PS) candidate pair."""

    imputation_spec: ModelSpec
    ps_spec: ModelSpec
    estimates: dict[str, EffectEstimate] = field(default_factory=dict)
    accuracy_w: float = math.nan
    out_bic: float = math.nan
    asmd: float = math.nan
    ks: float = math.nan
    abic: float = math.nan
    rank_score: float = math.nan
    status: str = "ok"
    method: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def estimate(self) -> EffectEstimate | None:
        if not self.estimates:
            return None
        key = self.method if self.method in self.estimates else next(iter(self.estimates))
        return self.estimates[key]


def midranks(values, descending: bool = False, tie_method: str = "mid") -> np.ndarray:
    """Ranks starting at 1; ties share the average (or minimum) position.

    NaN entries rank +inf on the convention that failed candidates never beat
    a surviving one and do not disturb the survivors' ranks.
    """
    v = np.asarray(values, dtype=float)
    ranks = np.full(v.shape, np.inf)
    good = np.flatnonzero(np.isfinite(v))
    if good.size == 0:
        return ranks
    key = -v[good] if descending else v[good]
    order = np.argsort(key, kind="mergesort")
    sorted_key = key[order]
    positions = np.arange(1, good.size + 1, dtype=float)
    out = np.empty(good.size)
    i = 0
    while i < good.size:
        j = i
        while j + 1 < good.size and sorted_key[j + 1] == sorted_key[i]:
            j += 1
        block = positions[i] if tie_method == "min" else positions[i : j + 1].mean()
        out[order[i : j + 1]] = block
        i = j + 1
    ranks[good] = out
    return ranks


def rank_score(reports, tie_method: str = "mid"):
    """Attach the rank score: mean of the accuracy rank and the BIC rank.

    Rank 1 is best on each axis (highest accuracy, smallest BIC), so the
    candidate minimizing the rank score has the best combined standing. Ties
    receive mid-ranks by default; tie_method="min" reproduces outputs ranked
    with shared-minimum ties.
    """
    acc = [r.accuracy_w if r.ok else math.nan for r in reports]
    bics = [r.out_bic if r.ok else math.nan for r in reports]
    acc_rank = midranks(acc, descending=True, tie_method=tie_method)
    bic_rank = midranks(bics, descending=False, tie_method=tie_method)
    out = []
    for report, ra, rb in zip(reports, acc_rank, bic_rank):
        score = (ra + rb) / 2.0
        out.append(replace_report(report, rank_score=float(score)))
    return out


def abic(reports):
    """Attach ABIC: the average of min-max-rescaled (1 - accuracy) and BIC.

    A degenerate axis (pool max equals pool min) contributes 0 to every
    candidate.
    """
    out = list(reports)
    live = [i for i, r in enumerate(out) if r.ok]
    if not live:
        return out
    acc = np.array([out[i].accuracy_w for i in live])
    bics = np.array([out[i].out_bic for i in live])

    def rescale(x):
        span = x.max() - x.min()
        if span == 0.0:
            return None
        return (x - x.min()) / span

    acc_scaled = rescale(acc)
    acc_term = np.zeros_like(acc) if acc_scaled is None else 1.0 - acc_scaled
    bic_scaled = rescale(bics)
    bic_term = np.zeros_like(bics) if bic_scaled is None else bic_scaled
    values = 0.5 * (acc_term + bic_term)
    for i, value in zip(live, values):
        out[i] = replace_report(out[i], abic=float(value))
    return out


def replace_report(report: CandidateReport, **changes) -> CandidateReport:
    return replace(report, **changes)


def spearman(x, y) -> float:
    """Spearman correlation: Pearson correlation of mid-ranks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length vectors with at least 2 entries")
    rx = midranks(x)
    ry = midranks(y)
    rx_c = rx - rx.mean()
    ry_c = ry - ry.mean()
    denom = math.sqrt(float(rx_c @ rx_c) * float(ry_c @ ry_c))
    if denom == 0.0:
        raise ValueError("rank variance is zero; correlation undefined")
    return float(rx_c @ ry_c / denom)
