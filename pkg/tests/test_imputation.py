import numpy as np
import pytest
from scipy.special import expit

from causalmiss import DataError, Dataset, FormulaError, impute, parse_formula
from causalmiss.simulation import binary_dgp, simulate_dataset

FULL = parse_formula("A ~ X1 + X2 + X3 + Y")


@pytest.fixture(scope="module")
def sim_data():
    return simulate_dataset(binary_dgp(400), np.random.default_rng(77)).dataset


def test_observed_values_preserved(sim_data):
    imps = impute(sim_data, FULL, m=5, seed=1)
    obs = sim_data.missing_indicator == 0
    for comp in imps.completions:
        assert np.array_equal(comp.exposure_imputed[obs], sim_data.exposure[obs])
        assert np.isin(comp.exposure_imputed, (0.0, 1.0)).all()


def test_no_missing_rows_yields_identical_completions():
    rng = np.random.default_rng(3)
    n = 60
    data = Dataset(
        covariates=rng.standard_normal((n, 1)),
        covariate_names=("X1",),
        exposure=(rng.random(n) < 0.5).astype(float),
        outcome=(rng.random(n) < 0.5).astype(float),
        missing_indicator=np.zeros(n, dtype=np.int8),
    )
    imps = impute(data, parse_formula("A ~ X1"), m=4, seed=9)
    for comp in imps.completions:
        assert np.array_equal(comp.exposure_imputed, data.exposure)


def test_reproducible_bit_for_bit(sim_data):
    a = impute(sim_data, FULL, m=6, seed=123)
    b = impute(sim_data, FULL, m=6, seed=123)
    for ca, cb in zip(a.completions, b.completions):
        assert np.array_equal(ca.exposure_imputed, cb.exposure_imputed)
    c = impute(sim_data, FULL, m=6, seed=124)
    assert any(
        not np.array_equal(ca.exposure_imputed, cc.exposure_imputed)
        for ca, cc in zip(a.completions, c.completions)
    )


def test_completion_subsets_stable_in_m(sim_data):
    # completion j depends on (seed, j) only, not on m
    small = impute(sim_data, FULL, m=3, seed=5)
    large = impute(sim_data, FULL, m=8, seed=5)
    for j in range(3):
        assert np.array_equal(
            small.completions[j].exposure_imputed, large.completions[j].exposure_imputed
        )


def test_degenerate_coin_flip_rate():
    # per-row imputation through the Bernoulli mechanism: intercept at
    # logit(0.5) with zero covariance must produce fair coin flips
    rng = np.random.default_rng(12)
    n = 10_000
    draws = (rng.random(n) < expit(np.zeros(n))).astype(float)
    rate = draws.mean()
    sigma = np.sqrt(0.25 / n)
    assert abs(rate - 0.5) < 3 * sigma


def test_monotone_coupling_in_intercept(sim_data):
    # same uniforms, higher intercept: imputed values can only move 0 -> 1
    from causalmiss.formula import predictor_matrix

    missing = np.flatnonzero(sim_data.missing_indicator == 1)
    X = predictor_matrix(FULL, sim_data, missing)
    beta = np.array([0.1, 0.4, -0.2, 0.3, 0.5])
    raised = beta.copy()
    raised[0] += 1.0
    u = np.random.default_rng(2).random(missing.size)
    low = (u < expit(X @ beta)).astype(float)
    high = (u < expit(X @ raised)).astype(float)
    assert np.all(high >= low)


def test_empirical_imputed_rate_tracks_model(sim_data):
    # the imputed-1 fraction should match the model-implied mean probability
    # on the missing rows within binomial noise
    from causalmiss.formula import predictor_matrix

    imps = impute(sim_data, FULL, m=40, seed=21)
    missing = np.flatnonzero(sim_data.missing_indicator == 1)
    X = predictor_matrix(FULL, sim_data, missing)
    p_hat = expit(X @ imps.fit.coefficients).mean()
    rate = np.mean([c.exposure_imputed[missing].mean() for c in imps.completions])
    total = missing.size * imps.m
    assert abs(rate - p_hat) < 4 * np.sqrt(0.25 / total) + 0.02


def test_bad_inputs_rejected(sim_data):
    with pytest.raises(ValueError):
        impute(sim_data, FULL, m=0, seed=1)
    with pytest.raises(FormulaError):
        impute(sim_data, parse_formula("Y ~ X1"), m=2, seed=1)
    with pytest.raises(FormulaError):
        impute(sim_data, parse_formula("A ~ X1 + Z9"), m=2, seed=1)


def test_too_few_observed_rows_rejected():
    rng = np.random.default_rng(8)
    n = 20
    exposure = np.full(n, np.nan)
    exposure[:6] = (rng.random(6) < 0.5).astype(float)
    data = Dataset(
        covariates=rng.standard_normal((n, 3)),
        covariate_names=("X1", "X2", "X3"),
        exposure=exposure,
        outcome=(rng.random(n) < 0.5).astype(float),
        missing_indicator=(np.isnan(exposure)).astype(np.int8),
    )
    with pytest.raises(DataError, match="observed-exposure rows"):
        impute(data, parse_formula("A ~ X1 + X2 + X3"), m=2, seed=1)
