import numpy as np
import pytest

from causalmiss import (
    CompletedDataset,
    Dataset,
    FormulaError,
    PoolingScaleError,
    RatioUndefined,
    dr_estimate,
    fit_outcome_model,
    fit_ps,
    impute,
    ipw_estimate,
    parse_formula,
    pool_rubin,
)
from causalmiss.estimators import MEAN_DIFFERENCE, RISK_RATIO
from causalmiss.simulation import binary_dgp, simulate_dataset


def completion_from(a, y, covs=None, outcome_kind="binary"):
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    n = a.size
    covs = np.asarray(covs, dtype=float) if covs is not None else np.zeros((n, 1))
    if covs.ndim == 1:
        covs = covs[:, None]
    data = Dataset(
        covariates=covs,
        covariate_names=tuple(f"X{i+1}" for i in range(covs.shape[1])),
        exposure=a.copy(),
        outcome=y,
        missing_indicator=np.zeros(n, dtype=np.int8),
        outcome_kind=outcome_kind,
    )
    return CompletedDataset(base=data, exposure_imputed=a)


class TestIpw:
    def test_hand_arithmetic_case(self):
        comp = completion_from([1, 1, 0, 0], [1, 0, 1, 0])
        tau1, tau0, tau = ipw_estimate(comp, np.full(4, 0.5), RISK_RATIO)
        assert tau1 == pytest.approx(0.5)
        assert tau0 == pytest.approx(0.5)
        assert tau == pytest.approx(1.0)

    def test_all_exposed_gives_ratio_undefined(self):
        comp = completion_from([1, 1, 1, 1], [1, 0, 1, 1])
        ps = np.full(4, 1 - 1e-6)
        with pytest.raises(RatioUndefined):
            ipw_estimate(comp, ps, RISK_RATIO)
        tau1, tau0, tau = ipw_estimate(comp, ps, MEAN_DIFFERENCE)
        assert tau1 == pytest.approx(np.mean([1, 0, 1, 1]), rel=1e-5)
        assert tau0 == 0.0

    def test_matches_bruteforce_summation(self):
        rng = np.random.default_rng(31)
        n = 50
        a = (rng.random(n) < 0.5).astype(float)
        y = rng.random(n)
        ps = rng.uniform(0.1, 0.9, n)
        comp = completion_from(a, y, outcome_kind="continuous")
        tau1, tau0, _ = ipw_estimate(comp, ps, MEAN_DIFFERENCE)
        s1 = sum(a[i] * y[i] / ps[i] for i in range(n)) / n
        s0 = sum((1 - a[i]) * y[i] / (1 - ps[i]) for i in range(n)) / n
        assert tau1 == pytest.approx(s1, abs=1e-12)
        assert tau0 == pytest.approx(s0, abs=1e-12)

    def test_linear_in_outcome(self):
        rng = np.random.default_rng(4)
        n = 30
        a = (rng.random(n) < 0.5).astype(float)
        y = rng.random(n)
        ps = rng.uniform(0.2, 0.8, n)
        base1 = ipw_estimate(completion_from(a, y, outcome_kind="continuous"), ps, MEAN_DIFFERENCE)
        base3 = ipw_estimate(completion_from(a, 3 * y, outcome_kind="continuous"), ps, MEAN_DIFFERENCE)
        assert base3[0] == pytest.approx(3 * base1[0], rel=1e-12)
        assert base3[1] == pytest.approx(3 * base1[1], rel=1e-12)
        # binary-flavored ratio invariance under scaling
        r1 = base1[0] / base1[1]
        r3 = base3[0] / base3[1]
        assert r3 == pytest.approx(r1, rel=1e-12)

    def test_intercept_only_ps_algebraic_identity(self):
        rng = np.random.default_rng(6)
        n = 80
        a = (rng.random(n) < 0.4).astype(float)
        y = rng.random(n)
        p_bar = a.mean()
        ps = np.full(n, p_bar)
        comp = completion_from(a, y, outcome_kind="continuous")
        tau1, tau0, _ = ipw_estimate(comp, ps, MEAN_DIFFERENCE)
        group_mean = y[a == 1].mean()
        group_size = a.sum()
        assert tau1 == pytest.approx(group_mean * group_size / (n * p_bar), rel=1e-12)

    def test_out_of_range_ps_rejected(self):
        comp = completion_from([1, 0], [1, 0])
        with pytest.raises(ValueError):
            ipw_estimate(comp, np.array([0.0, 0.5]), RISK_RATIO)


class TestDr:
    def test_matches_bruteforce_summation(self):
        rng = np.random.default_rng(55)
        sim = simulate_dataset(binary_dgp(200), rng)
        imps = impute(sim.dataset, parse_formula("A ~ X1 + X2 + X3 + Y"), m=1, seed=4)
        comp = imps.completions[0]
        ps_spec = parse_formula("A_imp ~ X1 + X3")
        ps = fit_ps(imps, ps_spec).ps_values[0]
        fit = fit_outcome_model(comp, ps_spec)
        tau1, tau0, _ = dr_estimate(comp, ps, fit, RISK_RATIO)

        from causalmiss.formula import predictor_matrix
        from causalmiss.glm import predict_mean

        X = predictor_matrix(fit.spec, comp)
        a_col = 1 + fit.spec.predictors.index("A_imp")
        X1 = X.copy(); X1[:, a_col] = 1.0
        X0 = X.copy(); X0[:, a_col] = 0.0
        m1 = predict_mean(fit, X1)
        m0 = predict_mean(fit, X0)
        a = comp.exposure_imputed
        y = comp.base.outcome
        n = comp.n
        s1 = sum(a[i] * y[i] / ps[i] - (a[i] - ps[i]) / ps[i] * m1[i] for i in range(n)) / n
        s0 = sum(
            (1 - a[i]) * y[i] / (1 - ps[i]) - (ps[i] - a[i]) / (1 - ps[i]) * m0[i]
            for i in range(n)
        ) / n
        assert tau1 == pytest.approx(s1, abs=1e-12)
        assert tau0 == pytest.approx(s0, abs=1e-12)

    def test_equals_ipw_when_outcome_model_is_zero(self):
        # the augmentation is proportional to the outcome-model predictions,
        # so a zero linear model makes DR and IPW coincide exactly
        from causalmiss.formula import ModelSpec
        from causalmiss.glm import FittedGlm

        rng = np.random.default_rng(17)
        n = 100
        x = rng.standard_normal(n)
        a = (rng.random(n) < 0.5).astype(float)
        y = rng.standard_normal(n) + a
        comp = completion_from(a, y, covs=x, outcome_kind="continuous")
        ps = rng.uniform(0.2, 0.8, n)
        zero_fit = FittedGlm(
            family="linear",
            coefficients=np.zeros(3),
            covariance=np.zeros((3, 3)),
            log_likelihood=0.0,
            n_rows=n,
            k_params=4,
            converged=True,
            iterations=1,
            spec=ModelSpec("Y", ("A_imp", "X1")),
        )
        dr = dr_estimate(comp, ps, zero_fit, MEAN_DIFFERENCE)
        ipw = ipw_estimate(comp, ps, MEAN_DIFFERENCE)
        assert dr == pytest.approx(ipw, abs=1e-14)

    def test_degenerate_ps_reduces_to_completed_arm_means(self):
        # ps equal to the exposure pins each arm to observed outcomes plus
        # model-imputed outcomes for the opposite arm
        rng = np.random.default_rng(18)
        n = 200
        x = rng.standard_normal(n)
        a = (rng.random(n) < 0.5).astype(float)
        y = (rng.random(n) < 0.3 + 0.3 * a).astype(float)
        comp = completion_from(a, y, covs=x)
        ps = np.where(a == 1.0, 1 - 1e-9, 1e-9)
        fit = fit_outcome_model(comp, parse_formula("A_imp ~ X1"))
        from causalmiss.formula import predictor_matrix
        from causalmiss.glm import predict_mean

        X = predictor_matrix(fit.spec, comp)
        a_col = 1 + fit.spec.predictors.index("A_imp")
        X1 = X.copy(); X1[:, a_col] = 1.0
        m1 = predict_mean(fit, X1)
        X1[:, a_col] = 0.0
        m0 = predict_mean(fit, X1)
        dr1, dr0, _ = dr_estimate(comp, ps, fit, MEAN_DIFFERENCE)
        assert dr1 == pytest.approx(np.mean(a * y + (1 - a) * m1), abs=1e-6)
        assert dr0 == pytest.approx(np.mean((1 - a) * y + a * m0), abs=1e-6)


class TestFitPs:
    def test_intercept_only_ps_is_group_rate(self):
        rng = np.random.default_rng(23)
        sim = simulate_dataset(binary_dgp(300), rng)
        imps = impute(sim.dataset, parse_formula("A ~ X1 + X2"), m=2, seed=3)
        ps_fit = fit_ps(imps, parse_formula("A_imp ~ 1"))
        for j, comp in enumerate(imps.completions):
            assert np.allclose(ps_fit.ps_values[j], comp.exposure_imputed.mean(), atol=1e-9)

    def test_outcome_predictor_rejected(self):
        rng = np.random.default_rng(23)
        sim = simulate_dataset(binary_dgp(300), rng)
        imps = impute(sim.dataset, parse_formula("A ~ X1 + X2"), m=1, seed=3)
        with pytest.raises(FormulaError, match="outcome"):
            fit_ps(imps, parse_formula("A_imp ~ X1 + Y"))

    def test_fitted_values_match_naive_loop(self):
        rng = np.random.default_rng(29)
        sim = simulate_dataset(binary_dgp(150), rng)
        imps = impute(sim.dataset, parse_formula("A ~ X1 + X2 + Y"), m=1, seed=6)
        ps_fit = fit_ps(imps, parse_formula("A_imp ~ X1 + X2"))
        beta = ps_fit.per_completion_fits[0].coefficients
        x = sim.dataset.covariates
        for i in range(sim.dataset.n):
            eta = beta[0] + beta[1] * x[i, 0] + beta[2] * x[i, 1]
            expected = 1.0 / (1.0 + np.exp(-eta))
            assert abs(ps_fit.ps_values[0][i] - expected) < 1e-12

    def test_clipping_bounds(self):
        rng = np.random.default_rng(29)
        sim = simulate_dataset(binary_dgp(150), rng)
        imps = impute(sim.dataset, parse_formula("A ~ X1 + X2"), m=3, seed=6)
        ps_fit = fit_ps(imps, parse_formula("A_imp ~ X1 + X2"))
        assert np.all(ps_fit.ps_values > 0.0)
        assert np.all(ps_fit.ps_values < 1.0)


class TestPoolRubin:
    def test_identical_estimates_pool_to_same_value(self):
        triples = [(0.6, 0.4, 1.5)] * 5
        est = pool_rubin(triples, RISK_RATIO)
        assert est.tau == pytest.approx(1.5)
        assert est.tau1 == pytest.approx(0.6)

    def test_log_scale_geometric_mean(self):
        est = pool_rubin([(1.0, 1.0, 1.0), (4.0, 1.0, 4.0)], RISK_RATIO)
        assert est.tau == pytest.approx(2.0)

    def test_raw_scale_flag(self):
        est = pool_rubin([(1.0, 1.0, 1.0), (4.0, 1.0, 4.0)], RISK_RATIO, log_scale_ratio=False)
        assert est.tau1 == pytest.approx(2.5)
        assert est.tau == pytest.approx(2.5)

    def test_ratio_identity_exact(self):
        rng = np.random.default_rng(13)
        triples = [(t1, t0, t1 / t0) for t1, t0 in rng.uniform(0.1, 2.0, (20, 2))]
        est = pool_rubin(triples, RISK_RATIO)
        assert est.tau == pytest.approx(est.tau1 / est.tau0, rel=1e-14)

    def test_difference_identity_exact(self):
        rng = np.random.default_rng(14)
        triples = [(t1, t0, t1 - t0) for t1, t0 in rng.normal(size=(20, 2))]
        est = pool_rubin(triples, MEAN_DIFFERENCE)
        assert est.tau == pytest.approx(est.tau1 - est.tau0, abs=1e-14)
        assert est.tau == pytest.approx(np.mean([t[2] for t in triples]), abs=1e-12)

    def test_matches_recomputation_oracle(self):
        rng = np.random.default_rng(47)
        sim = simulate_dataset(binary_dgp(250), rng)
        imps = impute(sim.dataset, parse_formula("A ~ X1 + X2 + X3 + Y"), m=20, seed=11)
        ps_fit = fit_ps(imps, parse_formula("A_imp ~ X1 + X3"))
        triples = [
            ipw_estimate(comp, ps_fit.ps_values[j], RISK_RATIO)
            for j, comp in enumerate(imps.completions)
        ]
        est = pool_rubin(triples, RISK_RATIO)
        assert est.tau == pytest.approx(
            np.exp(np.mean([np.log(t[2]) for t in triples])), rel=1e-12
        )

    def test_nonpositive_estimate_raises_pooling_error(self):
        with pytest.raises(PoolingScaleError):
            pool_rubin([(0.5, 0.5, 1.0), (-0.1, 0.5, -0.2)], RISK_RATIO)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pool_rubin([], RISK_RATIO)

    def test_rubin_variance_formula(self):
        triples = [(1.0, 1.0, 1.0), (2.0, 1.0, 2.0), (1.5, 1.0, 1.5)]
        within = np.array([0.1, 0.2, 0.3])
        est = pool_rubin(triples, MEAN_DIFFERENCE, within_variances=within)
        between = np.var([1.0, 2.0, 1.5], ddof=1)
        assert est.pooled_variance == pytest.approx(within.mean() + (1 + 1 / 3) * between)

    def test_variance_omitted_without_within(self):
        est = pool_rubin([(1.0, 1.0, 1.0)], RISK_RATIO)
        assert est.pooled_variance is None
