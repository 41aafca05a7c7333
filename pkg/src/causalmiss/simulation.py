"""Monte Carlo engine: data generation, replication runs, and summaries.

The generating process draws three independent standard-normal covariates and
then exposure, outcome, and missingness from user-settable coefficient
vectors (logit links; the continuous outcome uses an identity link with unit
Gaussian noise). Replications are driven by hash-derived seeds, so any subset
of replications reproduces bit-for-bit and runs can be parallelized without
changing results.
"""

from __future__ import annotations

import math
import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .criteria import SplitPlan
from .data import Dataset
from .estimators import MEAN_DIFFERENCE, RISK_RATIO
from .selection import CandidatePool, evaluate_pool, table_pool
from .seeds import derive_rng, derive_seed

COVARIATE_NAMES = ("X1", "X2", "X3")

CRITERIA_KEYS = ("accuracy_w", "out_bic", "asmd", "ks", "abic", "rank_score")


@dataclass(frozen=True)
class DgpConfig:
    """Coefficients for the three generating models.

    missingness_coefs and treatment_coefs pair with (intercept, X1, X2, X3);
    outcome_coefs with (intercept, A, X1, X2, X3). Terms absent from a model
    are zeros.
    """

    n: int = 500
    missingness_coefs: tuple = (-0.3, 0.4, 0.6, 1.8)
    treatment_coefs: tuple = (-0.2, 0.3, 1.0, 0.0)
    outcome_coefs: tuple = (-0.2, 2.0, -0.3, 0.0, 2.5)
    outcome_kind: str = "binary"
    estimand: str = RISK_RATIO
    true_tau: float | None = None

    def __post_init__(self):
        if len(self.missingness_coefs) != 4 or len(self.treatment_coefs) != 4:
            raise ValueError("missingness/treatment coefficients pair with (1, X1, X2, X3)")
        if len(self.outcome_coefs) != 5:
            raise ValueError("outcome coefficients pair with (1, A, X1, X2, X3)")


def binary_dgp(n: int = 500) -> DgpConfig:
    """The benchmark binary-outcome scenario (risk-ratio estimand)."""
    return DgpConfig(n=n)


def continuous_dgp(n: int = 500) -> DgpConfig:
    """The continuous-outcome variant: same linear predictor, identity link."""
    return DgpConfig(n=n, outcome_kind="continuous", estimand=MEAN_DIFFERENCE)


def default_pool() -> CandidatePool:
    """The five-imputation by four-PS grid over (X1; X2; X3)."""
    return table_pool("A", "Y", confounders=("X1",),
                      exposure_related=("X2",), outcome_related=("X3",))


@dataclass(frozen=True)
class SimulatedDataset:
    dataset: Dataset
    potential_outcomes: np.ndarray   # (n, 2): columns (Y^0, Y^1)
    true_a: np.ndarray               # (n,) exposure before masking


def _outcome_mean(cfg: DgpConfig, x: np.ndarray, a) -> np.ndarray:
    b = np.asarray(cfg.outcome_coefs, dtype=float)
    eta = b[0] + b[1] * a + x @ b[2:]
    return expit(eta) if cfg.outcome_kind == "binary" else eta


def simulate_dataset(cfg: DgpConfig, rng: np.random.Generator) -> SimulatedDataset:
    n = cfg.n
    x = rng.standard_normal((n, 3))

    t = np.asarray(cfg.treatment_coefs, dtype=float)
    a = (rng.random(n) < expit(t[0] + x @ t[1:])).astype(float)

    mean1 = _outcome_mean(cfg, x, 1.0)
    mean0 = _outcome_mean(cfg, x, 0.0)
    if cfg.outcome_kind == "binary":
        y1 = (rng.random(n) < mean1).astype(float)
        y0 = (rng.random(n) < mean0).astype(float)
    else:
        noise = rng.standard_normal(n)          # shared across arms
        y1 = mean1 + noise
        y0 = mean0 + noise
    y = a * y1 + (1.0 - a) * y0

    g = np.asarray(cfg.missingness_coefs, dtype=float)
    with np.errstate(invalid="ignore"):
        p_missing = expit(g[0] + x @ g[1:])
    r = (rng.random(n) < p_missing).astype(np.int8)
    exposure = a.copy()
    exposure[r == 1] = np.nan

    dataset = Dataset(
        covariates=x,
        covariate_names=COVARIATE_NAMES,
        exposure=exposure,
        outcome=y,
        missing_indicator=r,
        outcome_kind=cfg.outcome_kind,
        exposure_name="A",
        outcome_name="Y",
    )
    return SimulatedDataset(
        dataset=dataset,
        potential_outcomes=np.column_stack([y0, y1]),
        true_a=a,
    )


def true_effect(cfg: DgpConfig, n_mc: int = 2_000_000,
                rng: np.random.Generator | None = None) -> float:
    """The estimand under `cfg`: analytic for the linear mean-difference case,
    Monte Carlo over fresh covariate draws otherwise."""
    if cfg.true_tau is not None:
        return float(cfg.true_tau)
    if cfg.outcome_kind == "continuous" and cfg.estimand == MEAN_DIFFERENCE:
        return float(cfg.outcome_coefs[1])     # no interactions: exact
    rng = rng or np.random.default_rng(0)
    total1 = total0 = 0.0
    done = 0
    while done < n_mc:
        chunk = min(500_000, n_mc - done)
        x = rng.standard_normal((chunk, 3))
        total1 += float(_outcome_mean(cfg, x, 1.0).sum())
        total0 += float(_outcome_mean(cfg, x, 0.0).sum())
        done += chunk
    tau1, tau0 = total1 / n_mc, total0 / n_mc
    return tau1 / tau0 if cfg.estimand == RISK_RATIO else tau1 - tau0


@dataclass
class ReplicationRecords:
    """Raw per-replication, per-candidate results of a simulation run."""

    config: DgpConfig
    true_tau: float
    methods: tuple[str, ...]
    candidates: list[tuple[str, str]]          # (imputation formula, PS formula)
    tau: dict[str, np.ndarray]                 # method -> (N, C), NaN on failure
    criteria: dict[str, np.ndarray]            # criterion -> (N, C)
    failures: dict[tuple[int, int], str] = field(default_factory=dict)

    @property
    def n_replications(self) -> int:
        return next(iter(self.tau.values())).shape[0]


@dataclass
class CandidateSummary:
    imputation: str
    ps: str
    method: str
    n_used: int
    n_excluded: int
    bias: float
    bias_rate: float
    ese: float
    rmse: float
    means: dict[str, float]                    # mean criterion values


@dataclass
class ReplicationSummary:
    records: ReplicationRecords
    n_replications: int
    true_tau: float
    candidates: list[CandidateSummary]
    correlations: dict[str, dict[str, float]]  # method -> criterion -> mean Spearman

    def candidate_table(self, method: str) -> list[CandidateSummary]:
        return [c for c in self.candidates if c.method == method]

    def best_rmse(self, method: str) -> CandidateSummary:
        return min(self.candidate_table(method), key=lambda c: c.rmse)

    def worst_rmse(self, method: str) -> CandidateSummary:
        return max(self.candidate_table(method), key=lambda c: c.rmse)


def _one_replication(args):
    cfg, pool, methods, m, plan, master_seed, j = args
    rng = derive_rng(master_seed, "rep", j, "data")
    sim = simulate_dataset(cfg, rng)
    reports = evaluate_pool(
        sim.dataset, pool, methods, estimand=cfg.estimand, m=m, plan=plan,
        seed=derive_seed(master_seed, "rep", j, "eval"),
    )
    rows = []
    for report in reports:
        taus = {
            name: (report.estimates[name].tau if report.ok else math.nan)
            for name in methods
        }
        crit = {key: getattr(report, key) if report.ok else math.nan
                for key in CRITERIA_KEYS}
        rows.append((taus, crit, None if report.ok else report.status))
    return j, rows


def run_replications(cfg: DgpConfig, pool: CandidatePool | None = None,
                     method=("ipw", "dr"), *, n_replications: int = 1000,
                     m: int = 20, plan: SplitPlan | None = None,
                     master_seed: int = 0, workers: int = 1,
                     true_tau_mc: int = 2_000_000) -> ReplicationSummary:
    """Run the full study: N simulated datasets, each scored over the pool.

    `method` may be one of "ipw"/"dr" or a tuple of both; both estimators
    share the same imputations, PS fits, and criterion values, so requesting
    the pair costs little more than one.
    """
    pool = pool or default_pool()
    methods = (method,) if isinstance(method, str) else tuple(method)
    plan = plan or SplitPlan()
    candidates = [(str(imp), str(ps)) for imp, ps in pool.pairs]
    n_cand = len(candidates)

    tau_true = cfg.true_tau
    if tau_true is None:
        tau_true = true_effect(cfg, n_mc=true_tau_mc,
                               rng=derive_rng(master_seed, "truth"))

    tau = {name: np.full((n_replications, n_cand), np.nan) for name in methods}
    criteria = {key: np.full((n_replications, n_cand), np.nan) for key in CRITERIA_KEYS}
    failures: dict[tuple[int, int], str] = {}

    tasks = [(cfg, pool, methods, m, plan, master_seed, j)
             for j in range(n_replications)]
    if workers > 1:
        with mp.get_context("fork").Pool(processes=workers) as procs:
            results = list(procs.imap_unordered(_one_replication, tasks, chunksize=4))
    else:
        results = [_one_replication(t) for t in tasks]

    for j, rows in results:
        for c, (taus, crit, status) in enumerate(rows):
            for name in methods:
                tau[name][j, c] = taus[name]
            for key in CRITERIA_KEYS:
                criteria[key][j, c] = crit[key]
            if status is not None:
                failures[(j, c)] = status

    records = ReplicationRecords(
        config=cfg, true_tau=float(tau_true), methods=methods,
        candidates=candidates, tau=tau, criteria=criteria, failures=failures,
    )
    return summarize(records)


def summarize(records: ReplicationRecords, first_n: int | None = None) -> ReplicationSummary:
    """Bias / ESE / RMSE per candidate and criterion-RMSE correlations.

    `first_n` restricts to the leading replications; because replication
    seeds are hash-derived, that subset equals what a shorter run would have
    produced.
    """
    n = records.n_replications if first_n is None else min(first_n, records.n_replications)
    tau_true = records.true_tau
    summaries = []
    rmse_by_method = {}
    for name in records.methods:
        est = records.tau[name][:n]
        rmse_vec = np.empty(est.shape[1])
        for c, (imp, ps) in enumerate(records.candidates):
            col = est[:, c]
            good = np.isfinite(col)
            used = col[good]
            n_used = used.size
            if n_used >= 2:
                bias = float(used.mean() - tau_true)
                ese = float(np.sqrt(np.sum((used - used.mean()) ** 2) / (n_used - 1)))
                rmse = float(np.sqrt(np.sum((used - tau_true) ** 2) / (n_used - 1)))
            else:
                bias = ese = rmse = math.nan
            rmse_vec[c] = rmse
            means = {
                key: float(np.nanmean(records.criteria[key][:n, c]))
                if np.isfinite(records.criteria[key][:n, c]).any() else math.nan
                for key in CRITERIA_KEYS
            }
            summaries.append(CandidateSummary(
                imputation=imp, ps=ps, method=name,
                n_used=n_used, n_excluded=n - n_used,
                bias=bias, bias_rate=100.0 * bias / tau_true,
                ese=ese, rmse=rmse, means=means,
            ))
        rmse_by_method[name] = rmse_vec

    correlations = {
        name: _mean_spearman(records, rmse_by_method[name], n)
        for name in records.methods
    }
    return ReplicationSummary(
        records=records, n_replications=n, true_tau=tau_true,
        candidates=summaries, correlations=correlations,
    )


def _mean_spearman(records: ReplicationRecords, rmse_vec: np.ndarray, n: int):
    from .criteria import spearman

    transforms = {
        "one_minus_accuracy_w": 1.0 - records.criteria["accuracy_w"][:n],
        "asmd": records.criteria["asmd"][:n],
        "ks": records.criteria["ks"][:n],
        "out_bic": records.criteria["out_bic"][:n],
        "abic": records.criteria["abic"][:n],
        "rank_score": records.criteria["rank_score"][:n],
    }
    out = {}
    for key, matrix in transforms.items():
        values = []
        for j in range(matrix.shape[0]):
            row = matrix[j]
            good = np.isfinite(row) & np.isfinite(rmse_vec)
            if good.sum() < 2:
                continue
            x, y = row[good], rmse_vec[good]
            if np.all(x == x[0]) or np.all(y == y[0]):
                continue
            values.append(spearman(x, y))
        out[key] = float(np.mean(values)) if values else math.nan
    return out
