"""Weighted response means, conservative variances, and study differences.

The weighted mean response of study k is estimated as
sum(w y) / sum(w); conditioning on the observed covariates, its variance
is estimated conservatively as

    var(mu_k) = (sum w^2 / (sum w)^2) * s_k^2 = s_k^2 / ESS_k,

with s_k^2 the within-study response variance using the 1/n_k divisor
(that exact convention, not n-1, is deliberate and matches the estimator
this implements). Since ESS <= n_k always, the estimate never drops below
s_k^2 / n_k, with equality exactly at uniform weights. Both the mean and
the variance are invariant under rescaling all weights by a positive
constant.

Study differences get a normal-approximation confidence interval; no
bootstrap or jackknife refinement is offered here.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .data import CovariateTable
from .errors import NoResponseColumnError, ZeroWeightSumError

__all__ = ["ResponseEstimate", "DistributionSummary", "estimate_response", "difference_summary"]


@dataclass(frozen=True)
class ResponseEstimate:
    """Weighted response means of both studies and their difference."""

    mu0: float
    mu1: float
    s2_0: float  # response variance, 1/n divisor
    s2_1: float
    var_mu0: float
    var_mu1: float
    ess0: float
    ess1: float
    difference: float  # mu1 - mu0
    se: float
    ci_low: float
    ci_high: float
    ci_level: float

    def to_json_dict(self) -> dict:
        return {
            "mu": {"study0": self.mu0, "study1": self.mu1},
            "s2": {"study0": self.s2_0, "study1": self.s2_1},
            "var_mu": {"study0": self.var_mu0, "study1": self.var_mu1},
            "ess": {"study0": self.ess0, "study1": self.ess1},
            "difference": self.difference,
            "se": self.se,
            "ci": [self.ci_low, self.ci_high],
            "ci_level": self.ci_level,
        }


def _group_stats(y: np.ndarray, w: np.ndarray) -> tuple[float, float, float, float]:
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    sw = float(w.sum())
    if sw <= 0.0:
        raise ZeroWeightSumError("weights sum to zero")
    mu = float(w @ y) / sw
    n = y.shape[0]
    s2 = float(((y - y.mean()) ** 2).sum()) / n
    ess = sw * sw / float(w @ w)
    return mu, s2, ess, s2 / ess


def estimate_response(
    table: CovariateTable,
    w0,
    w1,
    ci_level: float = 0.95,
) -> ResponseEstimate:
    """Weighted response estimate for a weighting of the two studies.

    ``w0``/``w1`` align with the study-0/study-1 rows of the table in row
    order (the same order the design matrices use).
    """
    if table.response is None:
        raise NoResponseColumnError("table has no response column")
    if not 0.0 < ci_level < 1.0:
        raise ValueError("ci_level must be in (0, 1)")
    y = table.response
    y0 = y[table.study == 0]
    y1 = y[table.study == 1]
    w0 = np.asarray(w0, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    if w0.shape != y0.shape or w1.shape != y1.shape:
        raise ValueError("weight lengths do not match study sizes")

    mu0, s2_0, ess0, var0 = _group_stats(y0, w0)
    mu1, s2_1, ess1, var1 = _group_stats(y1, w1)
    diff = mu1 - mu0
    se = math.sqrt(var0 + var1)
    zq = float(norm.ppf(0.5 + ci_level / 2.0))
    return ResponseEstimate(
        mu0=mu0,
        mu1=mu1,
        s2_0=s2_0,
        s2_1=s2_1,
        var_mu0=var0,
        var_mu1=var1,
        ess0=ess0,
        ess1=ess1,
        difference=diff,
        se=se,
        ci_low=diff - zq * se,
        ci_high=diff + zq * se,
        ci_level=ci_level,
    )


@dataclass(frozen=True)
class DistributionSummary:
    """Spread of an estimate across replications, with NA bookkeeping."""

    count: int
    na_count: int
    minimum: float
    q1: float
    median: float
    mean: float
    q3: float
    maximum: float
    sd: float

    def to_json_dict(self) -> dict:
        return {
            "count": self.count,
            "na_count": self.na_count,
            "min": self.minimum,
            "q1": self.q1,
            "median": self.median,
            "mean": self.mean,
            "q3": self.q3,
            "max": self.maximum,
            "sd": self.sd,
        }


def difference_summary(values) -> DistributionSummary:
    """Summary statistics over replications; None/NaN count as NA.

    NA replications (e.g. matchings with no solution) are excluded from
    the moments and quantiles but counted separately.
    """
    arr = np.array(
        [math.nan if v is None else float(v) for v in values], dtype=np.float64
    )
    if arr.size == 0:
        raise ValueError("need at least one replication")
    ok = arr[~np.isnan(arr)]
    na = int(np.isnan(arr).sum())
    if ok.size == 0:
        nan = float("nan")
        return DistributionSummary(0, na, nan, nan, nan, nan, nan, nan, nan)
    q1, med, q3 = np.quantile(ok, [0.25, 0.5, 0.75])
    sd = float(ok.std(ddof=1)) if ok.size > 1 else 0.0
    return DistributionSummary(
        count=int(ok.size),
        na_count=na,
        minimum=float(ok.min()),
        q1=float(q1),
        median=float(med),
        mean=float(ok.mean()),
        q3=float(q3),
        maximum=float(ok.max()),
        sd=sd,
    )
