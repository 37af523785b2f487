"""Balance diagnostics: weighted moments, SMD, and side-by-side tables.

The standardized mean difference before weighting divides the absolute
mean gap by the usual pooled standard deviation (sample variances with
n-1 divisor). After weighting there is no consensus pooling rule, so the
weighted SMD divides by sqrt((s0*^2 + s1*^2)/2) built from the weighted
variances; the convention is recorded in report metadata. The 0.1/0.2
rules of thumb are annotation bands only, never gates.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import CovariateTable, DesignMatrix
from .errors import ZeroPooledSdError, ZeroWeightSumError
from .matching import WeightSolution
from .propensity import PropensityWeights

__all__ = [
    "weighted_mean",
    "weighted_variance",
    "smd",
    "BalanceReport",
    "balance_table",
    "weight_plot_rows",
]

SMD_BANDS = (0.1, 0.2)
_BOX_TOL = 1e-9


def _check_weights(values: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if x.shape != w.shape or x.ndim != 1:
        raise ValueError("values and weights must be 1-D of equal length")
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    if w.sum() <= 0.0:
        raise ZeroWeightSumError("weights sum to zero")
    return x, w


def weighted_mean(values, weights) -> float:
    """Convex combination sum(w x) / sum(w)."""
    x, w = _check_weights(values, weights)
    return float(w @ x / w.sum())


def weighted_variance(values, weights) -> float:
    """sum(w (x - mean)^2) / sum(w), nonnegative by construction."""
    x, w = _check_weights(values, weights)
    m = w @ x / w.sum()
    return float(w @ (x - m) ** 2 / w.sum())


def smd(x0, x1, w0=None, w1=None) -> float:
    """Absolute standardized mean difference between two study columns.

    Unweighted when ``w0``/``w1`` are omitted; weighted versions swap in
    the weighted means and variances.

    Raises
    ------
    ZeroPooledSdError
        When the pooled standard deviation vanishes; callers report such
        columns as not-applicable rather than 0.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if w0 is None and w1 is None:
        n0, n1 = x0.shape[0], x1.shape[0]
        m0, m1 = x0.mean(), x1.mean()
        v0 = x0.var(ddof=1) if n0 > 1 else 0.0
        v1 = x1.var(ddof=1) if n1 > 1 else 0.0
        pooled = ((n0 - 1) * v0 + (n1 - 1) * v1) / (n0 + n1 - 2)
    elif w0 is not None and w1 is not None:
        m0 = weighted_mean(x0, w0)
        m1 = weighted_mean(x1, w1)
        pooled = 0.5 * (weighted_variance(x0, w0) + weighted_variance(x1, w1))
    else:
        raise ValueError("supply weights for both studies or neither")
    if pooled <= 0.0:
        raise ZeroPooledSdError("pooled standard deviation is zero")
    return float(abs(m1 - m0) / np.sqrt(pooled))


@dataclass
class MethodColumn:
    """One method's weighted view of one encoded column."""

    weighted_mean0: float | None
    weighted_mean1: float | None
    smd_after: float | None  # absolute; None when not applicable
    box_violation: bool | None  # pooled weighted mean outside observed means


@dataclass
class BalanceColumn:
    name: str
    observed_mean0: float
    observed_mean1: float
    smd_before: float | None
    methods: dict[str, MethodColumn] = field(default_factory=dict)


@dataclass
class BalanceReport:
    """Per-column balance table plus per-method sample-size diagnostics."""

    columns: list[BalanceColumn]
    n0: int
    n1: int
    method_ess: dict[str, tuple[float, float]]
    method_status: dict[str, str]
    smd_bands: tuple[float, float] = SMD_BANDS
    weighted_sd_rule: str = "sqrt((weighted var study0 + weighted var study1)/2)"

    def max_smd_after(self, method: str) -> float:
        vals = [
            col.methods[method].smd_after
            for col in self.columns
            if col.methods[method].smd_after is not None
        ]
        return max(vals) if vals else float("nan")

    def to_json_dict(self) -> dict:
        return {
            "n": {"study0": self.n0, "study1": self.n1},
            "smd_bands": list(self.smd_bands),
            "weighted_sd_rule": self.weighted_sd_rule,
            "method_ess": {
                m: {"study0": e[0], "study1": e[1]}
                for m, e in self.method_ess.items()
            },
            "method_status": dict(self.method_status),
            "columns": [
                {
                    "name": c.name,
                    "observed_mean0": c.observed_mean0,
                    "observed_mean1": c.observed_mean1,
                    "smd_before": c.smd_before,
                    "methods": {
                        m: {
                            "weighted_mean0": mc.weighted_mean0,
                            "weighted_mean1": mc.weighted_mean1,
                            "smd_after": mc.smd_after,
                            "box_violation": mc.box_violation,
                        }
                        for m, mc in c.methods.items()
                    },
                }
                for c in self.columns
            ],
        }

    def to_csv_rows(self) -> list[list]:
        methods = list(self.method_ess)
        header = ["column", "observed_mean0", "observed_mean1", "smd_before"]
        for m in methods:
            header += [
                f"{m}_mean0",
                f"{m}_mean1",
                f"{m}_abs_smd",
                f"{m}_box_violation",
            ]
        rows: list[list] = [header]
        for c in self.columns:
            row: list = [c.name, c.observed_mean0, c.observed_mean1, c.smd_before]
            for m in methods:
                mc = c.methods[m]
                row += [
                    mc.weighted_mean0,
                    mc.weighted_mean1,
                    mc.smd_after,
                    mc.box_violation,
                ]
            rows.append(row)
        return rows


def _method_weights(sol) -> tuple[np.ndarray | None, np.ndarray | None, str]:
    if isinstance(sol, WeightSolution):
        if not sol.matched:
            return None, None, sol.status
        return sol.w0, sol.w1, sol.status
    if isinstance(sol, PropensityWeights):
        return sol.w0, sol.w1, "weighted"
    raise TypeError(f"unsupported solution type {type(sol).__name__}")


def balance_table(
    table: CovariateTable,
    dm: DesignMatrix,
    solutions: dict[str, WeightSolution | PropensityWeights],
) -> BalanceReport:
    """Observed and weighted means with SMDs for each encoded column.

    A method's ``box_violation`` flag marks columns whose pooled weighted
    mean falls outside the interval spanned by the two observed study
    means (the boldface convention of published balance tables).
    """
    n0, n1 = dm.X0.shape[0], dm.X1.shape[0]
    obs0 = dm.X0.mean(axis=0)
    obs1 = dm.X1.mean(axis=0)

    method_w: dict[str, tuple[np.ndarray | None, np.ndarray | None]] = {}
    status: dict[str, str] = {}
    ess_by_method: dict[str, tuple[float, float]] = {}
    for name, sol in solutions.items():
        w0, w1, st = _method_weights(sol)
        method_w[name] = (w0, w1)
        status[name] = st
        if w0 is None:
            ess_by_method[name] = (float("nan"), float("nan"))
        else:
            ess_by_method[name] = (
                float(w0.sum() ** 2 / (w0 @ w0)),
                float(w1.sum() ** 2 / (w1 @ w1)),
            )

    columns: list[BalanceColumn] = []
    for j, name in enumerate(dm.column_names):
        x0, x1 = dm.X0[:, j], dm.X1[:, j]
        try:
            before = smd(x0, x1)
        except ZeroPooledSdError:
            before = None
        col = BalanceColumn(
            name=name,
            observed_mean0=float(obs0[j]),
            observed_mean1=float(obs1[j]),
            smd_before=before,
        )
        lo = min(obs0[j], obs1[j])
        hi = max(obs0[j], obs1[j])
        for m, (w0, w1) in method_w.items():
            if w0 is None:
                col.methods[m] = MethodColumn(None, None, None, None)
                continue
            wm0 = weighted_mean(x0, w0)
            wm1 = weighted_mean(x1, w1)
            try:
                after = smd(x0, x1, w0, w1)
            except ZeroPooledSdError:
                after = None
            pooled = 0.5 * (wm0 + wm1)
            col.methods[m] = MethodColumn(
                weighted_mean0=wm0,
                weighted_mean1=wm1,
                smd_after=after,
                box_violation=bool(pooled < lo - _BOX_TOL or pooled > hi + _BOX_TOL),
            )
        columns.append(col)

    return BalanceReport(
        columns=columns,
        n0=n0,
        n1=n1,
        method_ess=ess_by_method,
        method_status=status,
    )


def weight_plot_rows(
    solutions: dict[str, WeightSolution | PropensityWeights],
) -> list[list]:
    """Per-patient weights standardized to sum 100 per study, long format.

    The data behind weight-vs-weight scatters and weight histograms;
    rendering itself is out of scope.
    """
    rows: list[list] = [["row_index", "study", "method", "weight_per_100"]]
    for name, sol in solutions.items():
        w0, w1, _ = _method_weights(sol)
        if w0 is None:
            continue
        f0, f1 = 100.0 / w0.sum(), 100.0 / w1.sum()
        for r, w in zip(sol.rows0, w0):
            rows.append([int(r), 0, name, float(w * f0)])
        for r, w in zip(sol.rows1, w1):
            rows.append([int(r), 1, name, float(w * f1)])
    return rows
