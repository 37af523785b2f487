"""Exception and warning types shared across the package."""


class IpdMatchError(Exception):
    """Base class for all errors raised by ipdmatch."""


class NotPositiveDefiniteError(IpdMatchError):
    """A matrix required to be symmetric positive definite is not."""


class DimensionMismatchError(IpdMatchError):
    """Operands have incompatible shapes."""


class DegenerateEqualitiesError(IpdMatchError):
    """Equality constraints are linearly dependent and cannot be satisfied.

    Usually signals a mis-built constraint matrix, e.g. a duplicated
    covariate column combined with contradictory right-hand sides.
    """


class SolverStalledError(IpdMatchError):
    """The active-set iteration exceeded its iteration budget."""


class MissingValueError(IpdMatchError):
    """A required cell is empty. Carries 1-based row and the column name."""

    def __init__(self, row: int, col: str):
        self.row = row
        self.col = col
        super().__init__(f"missing value at row {row}, column {col!r}")


class UnknownLevelError(IpdMatchError):
    """A categorical cell holds a value not among the declared levels."""

    def __init__(self, row: int, col: str, value: str):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(
            f"unknown level {value!r} at row {row}, column {col!r}"
        )


class SingleStudyError(IpdMatchError):
    """The study column does not contain exactly two distinct labels."""


class RankDeficientDesignError(IpdMatchError):
    """The estimation design matrix is collinear; names the columns."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "rank-deficient design, collinear columns: "
            + ", ".join(self.columns)
        )


class ZeroWeightSumError(IpdMatchError):
    """Weights sum to zero where a weighted statistic was requested."""


class AllZeroWeightsError(IpdMatchError):
    """ESS is undefined for an all-zero weight vector."""


class ZeroPooledSdError(IpdMatchError):
    """Pooled standard deviation is zero; SMD is not applicable."""


class NoResponseColumnError(IpdMatchError):
    """Response inference was requested on a table without a response."""


class DegenerateColumnWarning(UserWarning):
    """A design column is constant and equal in both studies; its balance
    constraint is vacuous and the column is dropped from the system."""


class ExtremePropensityWarning(UserWarning):
    """A fitted propensity is numerically indistinguishable from 0 or 1."""
