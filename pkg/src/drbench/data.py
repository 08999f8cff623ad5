"""Observational dataset container and CSV ingestion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Raised when an input dataset violates the expected layout."""


@dataclass(frozen=True)
class Dataset:
    """Covariates ``W``, binary treatment ``A`` and continuous outcome ``Y``.

    All arrays are float64, finite, and share the row count. Treatment must
    be coded 0/1. Instances are immutable and safe to share across threads.
    """

    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    treatment: np.ndarray
    outcome: np.ndarray
    treatment_name: str = "A"
    outcome_name: str = "Y"

    def __post_init__(self):
        W = np.asarray(self.covariates, dtype=float)
        A = np.asarray(self.treatment, dtype=float)
        Y = np.asarray(self.outcome, dtype=float)
        if W.ndim != 2:
            raise DataError("covariates must be a 2-d array")
        n = W.shape[0]
        if A.shape != (n,) or Y.shape != (n,):
            raise DataError("treatment/outcome length does not match covariate rows")
        if n < 10:
            raise DataError(f"need at least 10 observations, got {n}")
        if len(self.covariate_names) != W.shape[1]:
            raise DataError("covariate_names length does not match covariate columns")
        names = (*self.covariate_names, self.treatment_name, self.outcome_name)
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        if not np.isfinite(W).all():
            raise DataError("non-finite covariate value")
        if not np.isfinite(Y).all():
            raise DataError("non-finite outcome value")
        if not np.isin(A, (0.0, 1.0)).all():
            raise DataError("treatment must be binary 0/1")
        object.__setattr__(self, "covariates", W)
        object.__setattr__(self, "treatment", A)
        object.__setattr__(self, "outcome", Y)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def prevalence(self) -> float:
        """Observed treatment prevalence P̂(A=1)."""
        return float(self.treatment.mean())

    def column(self, name: str) -> np.ndarray:
        """Look up a column by name (covariate, treatment, or outcome)."""
        if name == self.treatment_name:
            return self.treatment
        if name == self.outcome_name:
            return self.outcome
        try:
            j = self.covariate_names.index(name)
        except ValueError:
            raise KeyError(f"no column named {name!r}") from None
        return self.covariates[:, j]

    def has_column(self, name: str) -> bool:
        return name in (self.treatment_name, self.outcome_name) or name in self.covariate_names

    def subset(self, idx: np.ndarray) -> "Dataset":
        """Row subset (or bootstrap resample when ``idx`` repeats rows)."""
        return Dataset(
            covariates=self.covariates[idx],
            covariate_names=self.covariate_names,
            treatment=self.treatment[idx],
            outcome=self.outcome[idx],
            treatment_name=self.treatment_name,
            outcome_name=self.outcome_name,
        )

    def with_outcome(self, outcome: np.ndarray) -> "Dataset":
        return Dataset(
            covariates=self.covariates,
            covariate_names=self.covariate_names,
            treatment=self.treatment,
            outcome=outcome,
            treatment_name=self.treatment_name,
            outcome_name=self.outcome_name,
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.covariates, columns=list(self.covariate_names))
        df[self.treatment_name] = self.treatment
        df[self.outcome_name] = self.outcome
        return df


def from_frame(df: pd.DataFrame, treatment: str, outcome: str) -> Dataset:
    """Build a :class:`Dataset` from a dataframe, keeping column order."""
    if treatment not in df.columns:
        raise DataError(f"treatment column {treatment!r} not found")
    if outcome not in df.columns:
        raise DataError(f"outcome column {outcome!r} not found")
    cov_names = [c for c in df.columns if c not in (treatment, outcome)]
    if df.isna().any().any():
        rows = np.nonzero(df.isna().any(axis=1).to_numpy())[0]
        # +2: header line plus 1-based indexing
        raise DataError(f"missing values are not supported (first at data line {rows[0] + 2})")
    try:
        W = df[cov_names].to_numpy(dtype=float)
        A = df[treatment].to_numpy(dtype=float)
        Y = df[outcome].to_numpy(dtype=float)
    except (TypeError, ValueError) as exc:
        raise DataError(f"non-numeric column in input: {exc}") from exc
    return Dataset(
        covariates=W,
        covariate_names=tuple(cov_names),
        treatment=A,
        outcome=Y,
        treatment_name=treatment,
        outcome_name=outcome,
    )


def load_csv(path, treatment: str, outcome: str) -> Dataset:
    """Read a comma-separated file (header row, '.' decimal, UTF-8).

    Missing values are rejected with the offending line number; imputation
    is out of scope.
    """
    try:
        df = pd.read_csv(path, sep=",", encoding="utf-8")
    except Exception as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return from_frame(df, treatment=treatment, outcome=outcome)
