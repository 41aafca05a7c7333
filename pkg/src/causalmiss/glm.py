"""Maximum-likelihood fitting for logistic and linear models.

Logistic fits use IRLS (Newton steps on the log-likelihood) with step-halving
whenever a full step would decrease the log-likelihood, so the likelihood
path is non-decreasing. Linear fits are closed-form least squares. Both
return exact log-likelihoods at the optimum, coefficient covariances suitable
for posterior-style draws, and BIC.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConvergenceError, RankDeficientError, SeparationDetected
from .formula import ModelSpec

GRADIENT_TOL = 1e-8          # stop when max |score| falls below this
LOGLIK_RELTOL = 1e-10        # or when the relative log-likelihood change does
CONVERGED_SCORE_TOL = 1e-6   # certification threshold for `converged`
MAX_ITERATIONS = 100
SEPARATION_BETA = 30.0       # |coefficient| on a standardized column


@dataclass(frozen=True)
class FittedGlm:
    family: str                       # "logistic" | "linear"
    coefficients: np.ndarray          # (k,)
    covariance: np.ndarray            # (k, k)
    log_likelihood: float
    n_rows: int
    k_params: int                     # counts the intercept; +1 for linear sigma^2
    converged: bool
    iterations: int
    spec: ModelSpec | None = None
    sigma2: float | None = None       # linear family only: RSS / (n - k)


def _logistic_loglik(eta: np.ndarray, y: np.ndarray) -> float:
    # sum y*eta - log(1 + exp(eta)), stable for large |eta|
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def _check_full_rank(X: np.ndarray) -> None:
    # Cholesky of the Gram matrix: much cheaper than an SVD rank check and
    # exact enough for the small, well-scaled designs this package fits.
    n, k = X.shape
    if n <= k:
        raise RankDeficientError(f"need more rows than parameters (n={n}, k={k})")
    try:
        chol = np.linalg.cholesky(X.T @ X)
    except np.linalg.LinAlgError:
        raise RankDeficientError("design matrix is rank deficient") from None
    diag = np.diag(chol)
    if diag.min() <= diag.max() * 1e-6:
        raise RankDeficientError("design matrix is rank deficient")


def _fit_logistic(X: np.ndarray, y: np.ndarray, spec) -> FittedGlm:
    n, k = X.shape
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("logistic family requires a 0/1 response")
    _check_full_rank(X)

    mean = X.mean(axis=0)
    scale = np.sqrt(np.maximum(np.einsum("ij,ij->j", X, X) / n - mean * mean, 0.0))
    scale[scale == 0.0] = 1.0          # intercept and constant columns

    beta = np.zeros(k)
    eta = np.zeros(n)
    p = np.full(n, 0.5)
    ll = _logistic_loglik(eta, y)

    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        score = X.T @ (y - p)
        if np.abs(score).max() < GRADIENT_TOL:
            break
        w = p * (1.0 - p)
        hessian = (X * w[:, None]).T @ X
        try:
            step = np.linalg.solve(hessian, score)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(hessian + 1e-10 * np.eye(k), score)

        # accept within the float resolution of the log-likelihood sum, or
        # Newton stalls once per-step improvements drop below representable
        noise = 1e-12 * max(1.0, abs(ll))
        step_size = 1.0
        improving = False
        while True:
            beta_new = beta + step_size * step
            eta_new = X @ beta_new
            ll_new = _logistic_loglik(eta_new, y)
            if ll_new >= ll - noise:
                improving = ll_new > ll
                break
            step_size *= 0.5
            if step_size < 1e-10:        # no ascent direction left; at the optimum
                beta_new, eta_new, ll_new = beta, eta, ll
                break

        rel_change = abs(ll_new - ll) / max(1.0, abs(ll))
        beta, eta, ll = beta_new, eta_new, ll_new
        p = expit(eta)

        if improving and np.abs(beta * scale).max() > SEPARATION_BETA:
            partial = _finish_logistic(X, y, beta, p, ll, iterations, converged=False)
            raise SeparationDetected(
                "quasi-complete separation: coefficients diverging while the "
                "log-likelihood still improves",
                partial_fit=partial,
            )
        if rel_change < LOGLIK_RELTOL:
            # accept the plateau only once the score certifies the optimum;
            # otherwise let further Newton steps polish it (the cap guards
            # genuinely stuck fits)
            if np.abs(X.T @ (y - p)).max() <= CONVERGED_SCORE_TOL:
                break
    score = X.T @ (y - p)
    if np.abs(score).max() > CONVERGED_SCORE_TOL:
        raise ConvergenceError(
            f"logistic fit did not converge after {iterations} iterations "
            f"(max |score| = {np.abs(score).max():.3g})"
        )
    return _finish_logistic(X, y, beta, p, ll, iterations, converged=True, spec=spec)


def _finish_logistic(X, y, beta, p, ll, iterations, converged, spec=None) -> FittedGlm:
    w = p * (1.0 - p)
    info = (X * w[:, None]).T @ X
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.linalg.inv(info + 1e-10 * np.eye(X.shape[1]))
    cov = (cov + cov.T) / 2.0
    return FittedGlm(
        family="logistic",
        coefficients=beta,
        covariance=cov,
        log_likelihood=ll,
        n_rows=X.shape[0],
        k_params=X.shape[1],
        converged=converged,
        iterations=iterations,
        spec=spec,
    )


def _fit_linear(X: np.ndarray, y: np.ndarray, spec) -> FittedGlm:
    n, k = X.shape
    _check_full_rank(X)
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    sigma2 = rss / (n - k)                    # unbiased, used for coefficient draws
    sigma2_mle = rss / n                      # maximizes the likelihood
    xtx_inv = np.linalg.inv(X.T @ X)
    cov = sigma2 * xtx_inv
    cov = (cov + cov.T) / 2.0
    ll = -0.5 * n * (np.log(2.0 * np.pi * max(sigma2_mle, 1e-300)) + 1.0)
    return FittedGlm(
        family="linear",
        coefficients=beta,
        covariance=cov,
        log_likelihood=ll,
        n_rows=n,
        k_params=k + 1,                        # sigma^2 counts as a parameter
        converged=True,
        iterations=1,
        spec=spec,
        sigma2=sigma2,
    )


def fit_glm(X, y, family: str, spec: ModelSpec | None = None) -> FittedGlm:
    """Fit a logistic or linear model by maximum likelihood."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, k) and y (n,) with matching n")
    if family == "logistic":
        return _fit_logistic(X, y, spec)
    if family == "linear":
        return _fit_linear(X, y, spec)
    raise ValueError(f"unknown family {family!r}")


def predict_mean(fit: FittedGlm, X) -> np.ndarray:
    """Fitted mean response: expit(X beta) for logistic, X beta for linear."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != fit.coefficients.shape[0]:
        raise ValueError(
            f"matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"fit expects {fit.coefficients.shape[0]}"
        )
    eta = X @ fit.coefficients
    return expit(eta) if fit.family == "logistic" else eta


def bic(fit: FittedGlm) -> float:
    """-2 log L + k ln(n); the linear family counts sigma^2 in k."""
    if not fit.converged:
        raise ConvergenceError("BIC requested for a non-converged fit")
    return -2.0 * fit.log_likelihood + fit.k_params * np.log(fit.n_rows)


def draw_coefficients(fit: FittedGlm, rng: np.random.Generator) -> np.ndarray:
    """One draw from Normal(coefficients, covariance) via Cholesky."""
    cov = fit.covariance
    if not np.any(cov):
        return fit.coefficients.copy()
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(cov + 1e-10 * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            raise RankDeficientError("coefficient covariance is not factorizable") from None
    z = rng.standard_normal(cov.shape[0])
    return fit.coefficients + chol @ z
