"""Propensity scores for study membership and pooled-population weights.

Fits the logistic regression of the study indicator on the covariates by
iteratively reweighted least squares (Newton scoring) and converts fitted
probabilities into weights that match both studies onto a pooled
population composed of fractions (nu0, nu1) of the two studies:

    study 0:  w  proportional to  (p*nu1 + (1-p)*nu0) / (1 - p)
    study 1:  w  proportional to  (p*nu1 + (1-p)*nu0) / p

With nu = (1/2, 1/2) these reduce to the inverse-probability weights
1/(1-p) and 1/p. Weights are normalized to sum to one per study so point
estimates are comparable with exact matching; scaling never changes a
weighted mean.

Estimation uses a full-rank design (intercept, one reference level dropped
per categorical); the mapping back to the overparameterized matching
encoding is recorded on the model. When every covariate is discrete, the
saturated model has the closed form p = n1_cell / n_cell per covariate
cell, which balances the two studies exactly on every doubly-occupied
cell; that path never runs IRLS into separation.
"""

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit

from .data import CovariateTable, DesignMatrix
from .errors import ExtremePropensityWarning, RankDeficientDesignError

__all__ = [
    "LogisticModel",
    "PropensityWeights",
    "SaturatedCheck",
    "fit_logistic",
    "pooled_weights",
    "saturated_exact_check",
]

SCORE_TOL = 1e-8
MAX_ITER = 100
SEPARATION_ETA = 15.0


@dataclass
class LogisticModel:
    """IRLS fit of study membership on the covariates.

    ``coefficients`` starts with the intercept, then one entry per
    estimation column (``column_names``); ``dropped_levels`` records which
    reference level was removed from each categorical block.
    """

    coefficients: np.ndarray
    column_names: tuple[str, ...]
    dropped_levels: dict[str, str]
    converged: bool
    iterations: int
    max_abs_linear_predictor: float
    separation: bool
    p_hat: np.ndarray  # per patient, study-0 rows then study-1 rows
    n0: int
    rows0: np.ndarray
    rows1: np.ndarray


@dataclass
class PropensityWeights:
    """Pooled-population weights derived from fitted propensities."""

    p_hat: np.ndarray
    w0: np.ndarray  # normalized to sum 1 within study 0
    w1: np.ndarray
    unnormalized0: np.ndarray
    unnormalized1: np.ndarray
    nu: tuple[float, float]
    separation_flag: bool
    extreme_flag: bool
    rows0: np.ndarray
    rows1: np.ndarray
    truncate_quantile: float | None = None

    @property
    def ess0(self) -> float:
        return float(self.w0.sum() ** 2 / (self.w0 @ self.w0))

    @property
    def ess1(self) -> float:
        return float(self.w1.sum() ** 2 / (self.w1 @ self.w1))

    def largest_standardized_weight(self) -> float:
        """Largest weight after standardizing to sum 100 per study."""
        w0n = self.w0 * (100.0 / self.w0.sum())
        w1n = self.w1 * (100.0 / self.w1.sum())
        return float(max(w0n.max(), w1n.max()))

    def to_json_dict(self) -> dict:
        return {
            "nu": list(self.nu),
            "separation": self.separation_flag,
            "extreme_propensities": self.extreme_flag,
            "truncate_quantile": self.truncate_quantile,
            "ess": {"study0": self.ess0, "study1": self.ess1},
        }


def estimation_design(dm: DesignMatrix) -> tuple[np.ndarray, tuple[str, ...], dict]:
    """Full-rank design from the overparameterized encoding.

    Keeps continuous and binary columns, drops the first declared level of
    every categorical block, and prepends an intercept.
    """
    keep: list[int] = []
    dropped: dict[str, str] = {}
    for j, (cov, level) in enumerate(dm.column_origin):
        if level is not None and cov not in dropped:
            dropped[cov] = level  # reference level
            continue
        keep.append(j)
    X = np.vstack([dm.X0[:, keep], dm.X1[:, keep]])
    X = np.hstack([np.ones((X.shape[0], 1)), X])
    names = ("(intercept)",) + tuple(dm.column_names[j] for j in keep)
    return X, names, dropped


def fit_logistic(dm: DesignMatrix) -> LogisticModel:
    """Fit the study-membership logistic model by IRLS.

    Raises
    ------
    RankDeficientDesignError
        Naming the collinear estimation columns.
    """
    X, names, dropped = estimation_design(dm)
    n0, n1 = dm.X0.shape[0], dm.X1.shape[0]
    z = np.concatenate([np.zeros(n0), np.ones(n1)])

    _, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank_tol = max(X.shape) * np.finfo(np.float64).eps * (diag.max() if diag.size else 0.0)
    rank = int((diag > rank_tol).sum())
    if rank < X.shape[1]:
        bad = sorted(names[j] for j in piv[rank:])
        raise RankDeficientDesignError(bad)

    beta = np.zeros(X.shape[1])
    converged = False
    separation = False
    it = 0
    eta = X @ beta
    for it in range(1, MAX_ITER + 1):
        pr = expit(eta)
        score = X.T @ (z - pr)
        if np.abs(score).max() <= SCORE_TOL:
            converged = True
            break
        if np.abs(eta).max() > SEPARATION_ETA:
            separation = True
            break
        w = pr * (1.0 - pr)
        H = (X * w[:, None]).T @ X
        try:
            beta = beta + np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            separation = True
            break
        eta = X @ beta

    return LogisticModel(
        coefficients=beta,
        column_names=names,
        dropped_levels=dropped,
        converged=converged,
        iterations=it,
        max_abs_linear_predictor=float(np.abs(eta).max()),
        separation=separation,
        p_hat=expit(eta),
        n0=n0,
        rows0=dm.rows0,
        rows1=dm.rows1,
    )


def _resolve_nu(nu, n0: int, n1: int) -> tuple[float, float] | None:
    """Returns (nu0, nu1), or None for the plain inverse-probability form."""
    if nu == "observed":
        n = n0 + n1
        return (n0 / n, n1 / n)
    if nu == "half":
        return None
    nu0, nu1 = float(nu[0]), float(nu[1])
    if nu0 < 0 or nu1 < 0 or abs(nu0 + nu1 - 1.0) > 1e-12:
        raise ValueError("nu fractions must be nonnegative and sum to 1")
    return (nu0, nu1)


def pooled_weights(
    model: LogisticModel,
    nu="observed",
    truncate_quantile: float | None = None,
) -> PropensityWeights:
    """Weights matching both studies onto the pooled population.

    ``nu`` is ``"observed"`` (study-size fractions), ``"half"`` (the
    inverse-probability form 1/(1-p), 1/p), or an explicit pair (nu0, nu1).
    Weights are positive, normalized to sum one per study; an optional
    quantile cap can truncate extreme raw weights before normalization
    (an ad hoc remedy, off by default).
    """
    p = model.p_hat
    n0 = model.n0
    p0, p1 = p[:n0], p[n0:]

    resolved = _resolve_nu(nu, n0, p1.shape[0])
    if resolved is None:
        raw0 = 1.0 / (1.0 - p0)
        raw1 = 1.0 / p1
        nu_pair = (0.5, 0.5)
    else:
        nu0, nu1 = resolved
        raw0 = (p0 * nu1 + (1.0 - p0) * nu0) / (1.0 - p0)
        raw1 = (p1 * nu1 + (1.0 - p1) * nu0) / p1
        nu_pair = (nu0, nu1)

    extreme = bool((p < 1e-6).any() or (p > 1.0 - 1e-6).any())
    if extreme:
        warnings.warn(
            "fitted propensities numerically at 0 or 1; weights may be extreme",
            ExtremePropensityWarning,
            stacklevel=2,
        )

    if truncate_quantile is not None:
        if not 0.0 < truncate_quantile <= 1.0:
            raise ValueError("truncate_quantile must be in (0, 1]")
        raw0 = np.minimum(raw0, np.quantile(raw0, truncate_quantile))
        raw1 = np.minimum(raw1, np.quantile(raw1, truncate_quantile))

    return PropensityWeights(
        p_hat=p,
        w0=raw0 / raw0.sum(),
        w1=raw1 / raw1.sum(),
        unnormalized0=raw0,
        unnormalized1=raw1,
        nu=nu_pair,
        separation_flag=model.separation,
        extreme_flag=extreme,
        rows0=model.rows0,
        rows1=model.rows1,
        truncate_quantile=truncate_quantile,
    )


@dataclass
class SaturatedCheck:
    """Closed-form saturated-model fit on all-discrete covariates.

    ``cells`` maps each observed covariate-value combination to
    ``(n_study0, n_study1, p_hat)``; combinations present in only one
    study are listed in ``separation_cells`` (quasi-complete separation)
    and excluded from the balance comparison. ``max_balance_gap`` is the
    largest absolute difference between the studies' weighted level
    proportions over doubly-occupied cells.
    """

    cells: dict[tuple, tuple[int, int, float]]
    separation_cells: tuple[tuple, ...]
    max_balance_gap: float
    level_proportions: dict[str, dict[str, tuple[float, float]]]


def saturated_exact_check(table: CovariateTable) -> SaturatedCheck:
    """Verify that saturated-model propensity weights balance exactly.

    Requires every covariate to be binary or categorical. Empty cells do
    not appear; single-study cells are reported, not used.
    """
    for cov in table.schema:
        if cov.kind == "continuous":
            raise ValueError(
                f"saturated model needs discrete covariates, {cov.name!r} is continuous"
            )

    def cell_of(i: int) -> tuple:
        return tuple(int(table.columns[c.name][i]) for c in table.schema)

    counts: Counter = Counter()
    for i in range(table.n):
        counts[(cell_of(i), int(table.study[i]))] += 1

    cell_keys = sorted({key for key, _ in counts})
    cells: dict[tuple, tuple[int, int, float]] = {}
    separation: list[tuple] = []
    for key in cell_keys:
        c0 = counts.get((key, 0), 0)
        c1 = counts.get((key, 1), 0)
        p_hat = c1 / (c0 + c1)
        cells[key] = (c0, c1, p_hat)
        if c0 == 0 or c1 == 0:
            separation.append(key)

    # Weights from the closed-form propensities, pooled with the observed
    # fractions, over rows in doubly-occupied cells only.
    doubly = {k for k in cells if k not in set(separation)}
    nu0 = table.n0 / table.n
    nu1 = 1.0 - nu0
    w = np.zeros(table.n)
    for i in range(table.n):
        key = cell_of(i)
        if key not in doubly:
            continue
        p = cells[key][2]
        num = p * nu1 + (1.0 - p) * nu0
        w[i] = num / (1.0 - p) if table.study[i] == 0 else num / p

    mask0 = (table.study == 0) & (w > 0)
    mask1 = (table.study == 1) & (w > 0)
    s0, s1 = w[mask0].sum(), w[mask1].sum()

    gap = 0.0
    level_props: dict[str, dict[str, tuple[float, float]]] = {}
    for cov in table.schema:
        col = table.columns[cov.name]
        levels = cov.levels if cov.kind == "categorical" else ("0", "1")
        per_level: dict[str, tuple[float, float]] = {}
        for lv_idx, lv in enumerate(levels):
            ind = (col == lv_idx).astype(np.float64)
            pr0 = float(w[mask0] @ ind[mask0] / s0) if s0 > 0 else float("nan")
            pr1 = float(w[mask1] @ ind[mask1] / s1) if s1 > 0 else float("nan")
            per_level[str(lv)] = (pr0, pr1)
            if s0 > 0 and s1 > 0:
                gap = max(gap, abs(pr0 - pr1))
        level_props[cov.name] = per_level

    return SaturatedCheck(
        cells=cells,
        separation_cells=tuple(separation),
        max_balance_gap=gap,
        level_proportions=level_props,
    )
