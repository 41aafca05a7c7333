"""R-style main-effects formulas and design-matrix construction.

Formulas look like ``"A ~ X1 + X2 + Y"``: a response name, a tilde, and a
``+``-separated list of bare column names. ``"A ~ 1"`` denotes an
intercept-only model. Interactions, transformations, and offsets are
deliberately rejected so that candidate-model enumeration stays unambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FormulaError

# Reserved response name for the missingness indicator.
MISSING_ROLE = "R"


def imputed_name(exposure_name: str) -> str:
    """Reserved response/predictor name for the imputed exposure."""
    return exposure_name + "_imp"


@dataclass(frozen=True)
class ModelSpec:
    """A parsed formula: response plus an ordered set of main-effect predictors."""

    response: str
    predictors: tuple[str, ...] = field(default_factory=tuple)
    intercept: bool = True

    def __post_init__(self):
        if not self.response:
            raise FormulaError("formula has an empty response")
        if len(set(self.predictors)) != len(self.predictors):
            raise FormulaError(f"duplicate predictor in {self.predictors}")
        if self.response in self.predictors:
            raise FormulaError(f"response {self.response!r} also appears as a predictor")
        if not self.intercept:
            raise FormulaError("models without an intercept are not supported")

    def __str__(self) -> str:
        rhs = " + ".join(self.predictors) if self.predictors else "1"
        return f"{self.response} ~ {rhs}"


def parse_formula(text: str) -> ModelSpec:
    """Parse ``response ~ term (+ term)*`` into a ModelSpec.

    Predictor order is preserved as written. ``response ~ 1`` yields an
    intercept-only spec. Interaction syntax (``:``/``*``) is rejected.
    """
    if text.count("~") != 1:
        raise FormulaError(f"formula must contain exactly one '~': {text!r}")
    lhs, rhs = text.split("~")
    response = lhs.strip()
    if not response:
        raise FormulaError(f"formula has an empty response: {text!r}")
    for bad in (":", "*", "-"):
        if bad in rhs:
            raise FormulaError(f"unsupported term syntax {bad!r} in {text!r}")
    terms = [t.strip() for t in rhs.split("+")]
    if any(not t for t in terms):
        raise FormulaError(f"empty term in {text!r}")
    if terms == ["1"]:
        return ModelSpec(response=response, predictors=())
    if "1" in terms:
        raise FormulaError(f"'1' may only appear as the sole term: {text!r}")
    for t in terms:
        if not t.replace("_", "").replace(".", "").isalnum():
            raise FormulaError(f"term {t!r} is not a bare column name in {text!r}")
    return ModelSpec(response=response, predictors=tuple(terms))


def _column(data, name: str) -> np.ndarray:
    """Resolve a predictor name to a column of `data`.

    Works on both Dataset and CompletedDataset. The imputed-exposure name
    (and, on completed data, the plain exposure name) resolves to the imputed
    exposure vector.
    """
    base = getattr(data, "base", data)
    imp = imputed_name(base.exposure_name)
    if name in base.covariate_names:
        return base.covariates[:, base.covariate_names.index(name)]
    if name == base.outcome_name:
        return base.outcome
    if name in (imp, base.exposure_name):
        if hasattr(data, "exposure_imputed"):
            return data.exposure_imputed
        raise FormulaError(
            f"{name!r} refers to the exposure, which has missing values on the "
            "raw dataset and cannot be a predictor; impute first"
        )
    if name == MISSING_ROLE:
        return base.missing_indicator.astype(float)
    raise FormulaError(f"name {name!r} does not resolve against the data")


def predictor_matrix(spec: ModelSpec, data, rows: np.ndarray | None = None) -> np.ndarray:
    """Intercept column plus predictor columns in spec order.

    `rows` optionally restricts to the given absolute row indices.
    """
    base = getattr(data, "base", data)
    n = base.n
    cols = [np.ones(n)]
    cols.extend(np.asarray(_column(data, name), dtype=float) for name in spec.predictors)
    X = np.column_stack(cols)
    if rows is not None:
        X = X[rows]
    return X


def design_matrix(spec: ModelSpec, data) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix and response vector for fitting `spec` on `data`.

    When the response is the exposure on a raw Dataset, only rows with an
    observed exposure are emitted (this is how imputation models are fit).
    All other responses use every row.
    """
    base = getattr(data, "base", data)
    completed = hasattr(data, "exposure_imputed")
    imp = imputed_name(base.exposure_name)

    if spec.response == base.exposure_name and not completed:
        rows = np.flatnonzero(base.missing_indicator == 0)
        y = base.exposure[rows]
    elif spec.response in (imp, base.exposure_name):
        if not completed:
            raise FormulaError(
                f"response {spec.response!r} requires a completed dataset"
            )
        rows = None
        y = np.asarray(data.exposure_imputed, dtype=float)
    elif spec.response == base.outcome_name:
        rows = None
        y = base.outcome
    elif spec.response == MISSING_ROLE:
        rows = None
        y = base.missing_indicator.astype(float)
    else:
        raise FormulaError(
            f"response {spec.response!r} is not an exposure, outcome, or "
            "missingness role in the data"
        )
    X = predictor_matrix(spec, data, rows)
    return X, np.asarray(y, dtype=float)
