"""Typed two-study dataset: schema, CSV ingestion, numeric encoding.

A :class:`CovariateTable` holds one row per patient across exactly two
studies, with covariates typed as continuous, binary (0/1), or categorical
over a declared, ordered level list. Missing values are rejected at
ingestion rather than imputed.

Encoding produces the per-study design matrices used by matching and
propensity scoring. Categorical covariates are encoded *overparameterized*,
one column per level, so the columns of each categorical block sum to one
in every row; this is what lets per-column box constraints treat levels
symmetrically downstream.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MissingValueError,
    SingleStudyError,
    UnknownLevelError,
)

__all__ = [
    "Covariate",
    "CovariateSchema",
    "CovariateTable",
    "DesignMatrix",
    "read_csv",
    "encode",
    "observed_means",
]

KINDS = ("continuous", "binary", "categorical")


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown covariate kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.levels:
                raise ValueError(f"categorical {self.name!r} declares no levels")
            if len(set(self.levels)) != len(self.levels):
                raise ValueError(f"duplicate levels for {self.name!r}")
        elif self.levels:
            raise ValueError(f"{self.kind} covariate {self.name!r} takes no levels")


@dataclass(frozen=True)
class CovariateSchema:
    covariates: tuple[Covariate, ...]

    def __post_init__(self):
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise ValueError("covariate names must be unique")

    def __iter__(self):
        return iter(self.covariates)

    def __len__(self):
        return len(self.covariates)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.covariates)


@dataclass
class CovariateTable:
    """Validated two-study dataset with optional response column.

    ``columns`` maps covariate name to a per-row array: float64 for
    continuous, 0/1 int8 for binary, level indices (into the declared
    level list) for categorical. Row order is ingestion order; ``study``
    holds 0/1 per row.
    """

    schema: CovariateSchema
    study: np.ndarray
    columns: dict[str, np.ndarray]
    response: np.ndarray | None = None
    study_labels: tuple[str, str] = ("0", "1")

    def __post_init__(self):
        self.study = np.asarray(self.study, dtype=np.int8)
        n = self.study.shape[0]
        if not np.isin(self.study, (0, 1)).all():
            raise ValueError("study indicator must be 0 or 1")
        if self.n0 == 0 or self.n1 == 0:
            raise SingleStudyError("both studies must be non-empty")
        for cov in self.schema:
            col = self.columns.get(cov.name)
            if col is None or len(col) != n:
                raise ValueError(f"column {cov.name!r} missing or wrong length")
            if cov.kind == "continuous" and not np.isfinite(col).all():
                raise ValueError(f"non-finite value in column {cov.name!r}")
        if self.response is not None:
            self.response = np.asarray(self.response, dtype=np.float64)
            if self.response.shape[0] != n:
                raise ValueError("response length does not match rows")
            if not np.isfinite(self.response).all():
                raise ValueError("non-finite response value")

    @property
    def n(self) -> int:
        return self.study.shape[0]

    @property
    def n0(self) -> int:
        return int((self.study == 0).sum())

    @property
    def n1(self) -> int:
        return int((self.study == 1).sum())


@dataclass
class DesignMatrix:
    """Per-study numeric encoding of a CovariateTable.

    ``column_origin`` records, for every encoded column, the covariate it
    came from and the level it indicates (None for continuous/binary).
    ``rows0`` / ``rows1`` give the original table row of each design row.
    """

    X0: np.ndarray
    X1: np.ndarray
    column_names: tuple[str, ...]
    column_origin: tuple[tuple[str, str | None], ...]
    rows0: np.ndarray = field(default=None)
    rows1: np.ndarray = field(default=None)

    @property
    def n_cols(self) -> int:
        return self.X0.shape[1]

    @property
    def n(self) -> int:
        return self.X0.shape[0] + self.X1.shape[0]


def _parse_float(raw: str, row: int, col: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ValueError(
            f"expected a number at row {row}, column {col!r}, got {raw!r}"
        ) from None


def read_csv(
    path,
    schema: CovariateSchema,
    study_col: str,
    study0: str | None = None,
    study1: str | None = None,
    response_col: str | None = None,
) -> CovariateTable:
    """Read and validate a UTF-8, comma-separated, headered CSV.

    The study column must contain exactly two distinct labels. The label
    given as ``study0`` maps to study 0; without an explicit directive the
    first label seen in the file becomes study 0. Rows keep file order.

    Raises
    ------
    MissingValueError, UnknownLevelError, SingleStudyError
        Naming the offending row (1-based, excluding the header) and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file, header row required")
        header = set(reader.fieldnames)
        needed = {study_col, *(c.name for c in schema)}
        if response_col is not None:
            needed.add(response_col)
        missing_cols = sorted(needed - header)
        if missing_cols:
            raise ValueError(f"{path}: missing columns {missing_cols}")
        rows = list(reader)

    raw_study: list[str] = []
    for i, rec in enumerate(rows, start=1):
        val = (rec.get(study_col) or "").strip()
        if not val:
            raise MissingValueError(i, study_col)
        raw_study.append(val)
    seen = sorted(set(raw_study), key=raw_study.index)
    if len(seen) != 2:
        raise SingleStudyError(
            f"study column {study_col!r} has {len(seen)} distinct label(s): {seen}"
        )
    if study0 is None and study1 is None:
        study0, study1 = seen
    elif study0 is not None and study1 is None:
        if study0 not in seen:
            raise SingleStudyError(f"label {study0!r} not present in {study_col!r}")
        study1 = next(s for s in seen if s != study0)
    elif study0 is None:
        if study1 not in seen:
            raise SingleStudyError(f"label {study1!r} not present in {study_col!r}")
        study0 = next(s for s in seen if s != study1)
    if {study0, study1} != set(seen):
        raise SingleStudyError(
            f"labels {study0!r}/{study1!r} do not match data labels {seen}"
        )
    study = np.fromiter(
        (0 if s == study0 else 1 for s in raw_study), dtype=np.int8, count=len(rows)
    )

    columns: dict[str, np.ndarray] = {}
    for cov in schema:
        vals = []
        for i, rec in enumerate(rows, start=1):
            raw = (rec.get(cov.name) or "").strip()
            if not raw:
                raise MissingValueError(i, cov.name)
            if cov.kind == "continuous":
                vals.append(_parse_float(raw, i, cov.name))
            elif cov.kind == "binary":
                if raw not in ("0", "1"):
                    raise UnknownLevelError(i, cov.name, raw)
                vals.append(int(raw))
            else:
                try:
                    vals.append(cov.levels.index(raw))
                except ValueError:
                    raise UnknownLevelError(i, cov.name, raw) from None
        dtype = np.float64 if cov.kind == "continuous" else np.int16
        columns[cov.name] = np.asarray(vals, dtype=dtype)

    response = None
    if response_col is not None:
        vals = []
        for i, rec in enumerate(rows, start=1):
            raw = (rec.get(response_col) or "").strip()
            if not raw:
                raise MissingValueError(i, response_col)
            vals.append(_parse_float(raw, i, response_col))
        response = np.asarray(vals, dtype=np.float64)

    return CovariateTable(
        schema=schema,
        study=study,
        columns=columns,
        response=response,
        study_labels=(study0, study1),
    )


def encode(table: CovariateTable) -> DesignMatrix:
    """Encode to per-study design matrices.

    Column order is schema order with categorical levels in declared
    order, so identical input yields an identical DesignMatrix. Each
    categorical contributes one 0/1 column per level; those columns sum
    to one in every row.
    """
    names: list[str] = []
    origin: list[tuple[str, str | None]] = []
    blocks: list[np.ndarray] = []
    for cov in table.schema:
        col = table.columns[cov.name]
        if cov.kind == "categorical":
            dummies = np.zeros((table.n, len(cov.levels)))
            dummies[np.arange(table.n), col] = 1.0
            blocks.append(dummies)
            for lv in cov.levels:
                names.append(f"{cov.name}={lv}")
                origin.append((cov.name, lv))
        else:
            blocks.append(np.asarray(col, dtype=np.float64)[:, None])
            names.append(cov.name)
            origin.append((cov.name, None))
    X = np.hstack(blocks) if blocks else np.zeros((table.n, 0))
    mask0 = table.study == 0
    rows = np.arange(table.n)
    return DesignMatrix(
        X0=X[mask0],
        X1=X[~mask0],
        column_names=tuple(names),
        column_origin=tuple(origin),
        rows0=rows[mask0],
        rows1=rows[~mask0],
    )


def observed_means(table: CovariateTable) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    """Per-study mean vectors on the encoded scale.

    For a categorical level column the mean is that level's proportion.
    Returns ``(column_names, means_study0, means_study1)``.
    """
    dm = encode(table)
    return dm.column_names, dm.X0.mean(axis=0), dm.X1.mean(axis=0)
