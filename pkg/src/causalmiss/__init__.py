"""Causal effect estimation and model selection with a missing binary exposure.

The pipeline: multiply impute the exposure under MAR, fit a propensity-score
model per completion, estimate the causal risk ratio (or mean difference)
with IPW or doubly robust weighting, pool with Rubin's Rules, score every
(imputation, PS) candidate pair on six criteria, and pick the pair with the
smallest rank score. A Monte Carlo engine and a bootstrap round out the
simulation and uncertainty workflows.
"""

from .bootstrap import BootstrapResult, bootstrap_effect, estimate_pair
from .criteria import (
    CandidateReport,
    MissingnessFit,
    SplitPlan,
    abic,
    asmd,
    benchmark_accuracy,
    fit_missingness,
    ks_statistic,
    outcome_bic,
    rank_score,
    spearman,
    weighted_accuracy,
)
from .data import (
    ColumnSchema,
    CompletedDataset,
    Dataset,
    PositivityReport,
    load_csv,
    validate_positivity,
    write_completions_csv,
    write_csv,
)
from .errors import (
    AllCandidatesFailed,
    BootstrapFailure,
    CausalmissError,
    ConfigError,
    ConvergenceError,
    DataError,
    FormulaError,
    PoolingScaleError,
    RankDeficientError,
    RatioUndefined,
    SeparationDetected,
)
from .estimators import (
    EffectEstimate,
    PsFit,
    dr_estimate,
    fit_outcome_model,
    fit_ps,
    ipw_estimate,
    pool_rubin,
)
from .formula import ModelSpec, design_matrix, imputed_name, parse_formula
from .glm import FittedGlm, bic, draw_coefficients, fit_glm, predict_mean
from .imputation import ImputationSet, impute
from .selection import (
    CandidatePool,
    evaluate_pool,
    select_best,
    select_sequential,
    table_pool,
)
from .simulation import (
    DgpConfig,
    ReplicationSummary,
    SimulatedDataset,
    binary_dgp,
    continuous_dgp,
    default_pool,
    run_replications,
    simulate_dataset,
    summarize,
    true_effect,
)

__version__ = "0.1.0"
