"""Observed-data containers and CSV ingestion for the missing-exposure problem.

A Dataset holds fully observed covariates and outcome, a partially observed
binary exposure, and the derived missingness indicator. Covariates and the
outcome must be complete: rows with holes there are a hard load error, never
silently dropped. Datasets are immutable after construction and safe to share
across worker processes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .formula import MISSING_ROLE, imputed_name

DEFAULT_MISSING_TOKENS = ("",)


@dataclass(frozen=True)
class Dataset:
    covariates: np.ndarray            # (n, p) float64
    covariate_names: tuple[str, ...]
    exposure: np.ndarray              # (n,) float64, NaN where missing
    outcome: np.ndarray               # (n,) float64
    missing_indicator: np.ndarray     # (n,) int8, 1 = exposure missing
    outcome_kind: str = "binary"      # "binary" | "continuous"
    exposure_name: str = "A"
    outcome_name: str = "Y"

    def __post_init__(self):
        object.__setattr__(self, "covariates", np.asarray(self.covariates, dtype=float))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "exposure", np.asarray(self.exposure, dtype=float))
        object.__setattr__(self, "outcome", np.asarray(self.outcome, dtype=float))
        object.__setattr__(
            self, "missing_indicator", np.asarray(self.missing_indicator, dtype=np.int8)
        )
        self._validate()

    def _validate(self):
        n = self.exposure.shape[0]
        if n == 0:
            raise DataError("dataset has no rows")
        if self.covariates.ndim != 2 or self.covariates.shape[0] != n:
            raise DataError("covariate matrix shape does not match the exposure length")
        if self.covariates.shape[1] != len(self.covariate_names):
            raise DataError("covariate names do not match the matrix width")
        if self.outcome.shape != (n,) or self.missing_indicator.shape != (n,):
            raise DataError("outcome / missing-indicator length mismatch")
        if not np.isfinite(self.covariates).all():
            raise DataError("covariates contain missing or non-finite values")
        if not np.isfinite(self.outcome).all():
            raise DataError("outcome contains missing or non-finite values")
        if self.outcome_kind not in ("binary", "continuous"):
            raise DataError(f"unknown outcome_kind {self.outcome_kind!r}")
        if self.outcome_kind == "binary" and not np.isin(self.outcome, (0.0, 1.0)).all():
            raise DataError("binary outcome values must be 0/1")
        if not np.isin(self.missing_indicator, (0, 1)).all():
            raise DataError("missing indicator must be 0/1")
        absent = np.isnan(self.exposure)
        if not np.array_equal(absent, self.missing_indicator == 1):
            raise DataError("missing indicator does not match absent exposure entries")
        present = self.exposure[~absent]
        if not np.isin(present, (0.0, 1.0)).all():
            raise DataError("observed exposure values must be 0/1")
        names = set(self.covariate_names) | {self.exposure_name, self.outcome_name}
        if len(names) != len(self.covariate_names) + 2:
            raise DataError("column names are not unique")
        reserved = {MISSING_ROLE, imputed_name(self.exposure_name)}
        clash = names & reserved
        if clash:
            raise DataError(f"column names collide with reserved names: {sorted(clash)}")

    @property
    def n(self) -> int:
        return self.exposure.shape[0]

    @property
    def n_missing(self) -> int:
        return int(self.missing_indicator.sum())

    @property
    def missing_rate(self) -> float:
        return self.n_missing / self.n

    @property
    def observed_rows(self) -> np.ndarray:
        return np.flatnonzero(self.missing_indicator == 0)

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row-subset copy (used by the bootstrap resampler)."""
        rows = np.asarray(rows)
        return Dataset(
            covariates=self.covariates[rows],
            covariate_names=self.covariate_names,
            exposure=self.exposure[rows],
            outcome=self.outcome[rows],
            missing_indicator=self.missing_indicator[rows],
            outcome_kind=self.outcome_kind,
            exposure_name=self.exposure_name,
            outcome_name=self.outcome_name,
        )


@dataclass(frozen=True)
class CompletedDataset:
    """One completion of the exposure: observed values kept, missing ones drawn."""

    base: Dataset
    exposure_imputed: np.ndarray      # (n,) float64 in {0, 1}
    imputation_index: int = 1

    def __post_init__(self):
        object.__setattr__(
            self, "exposure_imputed", np.asarray(self.exposure_imputed, dtype=float)
        )
        if self.exposure_imputed.shape != (self.base.n,):
            raise DataError("imputed exposure length mismatch")
        if not np.isin(self.exposure_imputed, (0.0, 1.0)).all():
            raise DataError("imputed exposure values must be 0/1")
        obs = self.base.missing_indicator == 0
        if not np.array_equal(self.exposure_imputed[obs], self.base.exposure[obs]):
            raise DataError("completion disagrees with observed exposure values")

    @property
    def n(self) -> int:
        return self.base.n


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV columns onto exposure / outcome / covariate roles."""

    exposure: str
    outcome: str
    covariates: tuple[str, ...]
    outcome_kind: str = "binary"
    missing_tokens: tuple[str, ...] = DEFAULT_MISSING_TOKENS


def _parse_binary(token: str, column: str, row: int) -> float:
    mapped = {"0": 0.0, "1": 1.0}.get(token.strip())
    if mapped is None:
        raise DataError(f"non-binary value {token!r} in column {column!r} (row {row})")
    return mapped


def _parse_float(token: str, column: str, row: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise DataError(f"bad numeric value {token!r} in column {column!r} (row {row})") from None


def load_csv(path, schema: ColumnSchema) -> Dataset:
    """Read a headered CSV into a validated Dataset.

    The exposure column may contain a missing sentinel (empty field by
    default, configurable via ``schema.missing_tokens``); every other mapped
    column must be fully observed. Two-level string covariates are recoded to
    0/1 by sorted level order; covariates with more than two distinct
    non-numeric levels are rejected, since silent dummy expansion would change
    candidate-model enumeration.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]

    header = [h.strip() for h in header]
    wanted = [schema.exposure, schema.outcome, *schema.covariates]
    for name in wanted:
        if name not in header:
            raise DataError(f"{path}: column {name!r} not found in header {header}")
    if len(set(wanted)) != len(wanted):
        raise DataError("schema maps the same column to more than one role")

    idx = {name: header.index(name) for name in wanted}
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")

    missing = set(schema.missing_tokens)
    exposure, mind = [], []
    for r, row in enumerate(rows, start=2):
        token = row[idx[schema.exposure]].strip()
        if token in missing:
            exposure.append(np.nan)
            mind.append(1)
        else:
            exposure.append(_parse_binary(token, schema.exposure, r))
            mind.append(0)

    if schema.outcome_kind == "binary":
        outcome = [_parse_binary(row[idx[schema.outcome]], schema.outcome, r)
                   for r, row in enumerate(rows, start=2)]
    else:
        outcome = [_parse_float(row[idx[schema.outcome]], schema.outcome, r)
                   for r, row in enumerate(rows, start=2)]

    columns = []
    for name in schema.covariates:
        raw = [row[idx[name]].strip() for row in rows]
        if any(tok in missing for tok in raw):
            raise DataError(f"covariate {name!r} has missing values; rows must be complete")
        try:
            columns.append([float(tok) for tok in raw])
        except ValueError:
            levels = sorted(set(raw))
            if len(levels) != 2:
                raise DataError(
                    f"covariate {name!r} has {len(levels)} non-numeric levels; "
                    "pre-encode multi-level categoricals as 0/1 dummies"
                ) from None
            code = {levels[0]: 0.0, levels[1]: 1.0}
            columns.append([code[tok] for tok in raw])

    covariates = (
        np.array(columns, dtype=float).T
        if columns
        else np.empty((len(rows), 0))
    )
    return Dataset(
        covariates=covariates,
        covariate_names=schema.covariates,
        exposure=np.array(exposure),
        outcome=np.array(outcome),
        missing_indicator=np.array(mind, dtype=np.int8),
        outcome_kind=schema.outcome_kind,
        exposure_name=schema.exposure,
        outcome_name=schema.outcome,
    )


def _format_cell(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_csv(dataset: Dataset, path, missing_token: str = "") -> None:
    """Write a Dataset back to CSV with the same header layout load_csv reads."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([dataset.exposure_name, dataset.outcome_name, *dataset.covariate_names])
        for i in range(dataset.n):
            a = missing_token if dataset.missing_indicator[i] else _format_cell(dataset.exposure[i])
            writer.writerow(
                [a, _format_cell(dataset.outcome[i])]
                + [_format_cell(v) for v in dataset.covariates[i]]
            )


def write_completions_csv(completions, path) -> None:
    """Write completed datasets as CSV: original header plus imputation_index."""
    completions = list(completions)
    base = completions[0].base
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [base.exposure_name, base.outcome_name, *base.covariate_names, "imputation_index"]
        )
        for comp in completions:
            for i in range(base.n):
                writer.writerow(
                    [_format_cell(comp.exposure_imputed[i]), _format_cell(base.outcome[i])]
                    + [_format_cell(v) for v in base.covariates[i]]
                    + [comp.imputation_index]
                )


@dataclass(frozen=True)
class PositivityReport:
    eps: float
    n_checked: int
    violations: tuple[int, ...] = field(default_factory=tuple)

    @property
    def n_violations(self) -> int:
        return len(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_positivity(ps_values, eps: float = 0.01) -> PositivityReport:
    """Report fitted propensity values outside [eps, 1 - eps]. Never mutates."""
    ps = np.asarray(ps_values, dtype=float)
    if not np.isfinite(ps).all():
        raise DataError("propensity values must be finite")
    bad = np.flatnonzero((ps < eps) | (ps > 1.0 - eps))
    return PositivityReport(eps=eps, n_checked=ps.size, violations=tuple(int(i) for i in bad))
