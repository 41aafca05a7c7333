"""Exception types shared across the package."""


class CausalmissError(Exception):
    """Base class for all package-specific errors."""


class DataError(CausalmissError):
    """Malformed input data: bad CSV cells, schema violations, invalid encodings."""


class FormulaError(CausalmissError):
    """Unparseable formula or a name that does not resolve against the data."""


class RankDeficientError(CausalmissError):
    """Design matrix does not have full column rank."""


class ConvergenceError(CausalmissError):
    """Model fit did not converge within the iteration cap."""


class SeparationDetected(CausalmissError):
    """Quasi-complete separation in a logistic fit.

    Coefficients ran away on the standardized scale while the log-likelihood
    was still improving; fitted probabilities are numerically 0/1 and any
    inverse-probability weight built on them would explode. The partial fit
    is attached for diagnostics.
    """

    def __init__(self, message, partial_fit=None):
        super().__init__(message)
        self.partial_fit = partial_fit


class RatioUndefined(CausalmissError):
    """Risk ratio requested but the denominator tau0 is zero."""


class PoolingScaleError(CausalmissError):
    """Log-scale pooling requested for a nonpositive per-imputation estimate."""


class AllCandidatesFailed(CausalmissError):
    """Every candidate in the pool failed; there is nothing to select."""


class BootstrapFailure(CausalmissError):
    """Too many bootstrap replicates failed to produce an estimate."""


class ConfigError(CausalmissError):
    """Invalid run configuration (missing keys, bad values, unknown columns)."""
