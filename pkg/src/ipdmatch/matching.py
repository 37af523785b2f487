"""Exact-matching weights for two studies by constrained quadratic programming.

Builds the canonical constraint system over the stacked weight vector
w = (w0', w1')' and minimizes ||w||^2 subject to

  - balance: the weighted covariate means of the two studies coincide,
    expressed as (-X0 stacked over X1)' w = 0 per encoded column;
  - normalization: each study's weights sum to one;
  - nonnegativity of every weight;
  - optionally, per-column box rows that keep the pooled weighted mean
    between the two observed study means (right-hand sides carry a factor
    2 because the two normalization rows make the weights sum to 2), and
    an optional cap on individual weights.

Minimizing ||w||^2 under a fixed weight sum maximizes the effective sample
size (ESS), so the solution is the "most uniform" exactly balancing weight.
Infeasibility (disjoint convex hulls, or box rows that cut off the
intersection) is a normal outcome reported as ``no_solution``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .data import DesignMatrix
from .errors import AllZeroWeightsError, DegenerateColumnWarning
from .qp import INFEASIBLE, TOLERANCES, QpProblem, solve_qp

__all__ = ["MatchSpec", "WeightSolution", "build_qp", "match", "ess"]

MATCHED = "matched"
NO_SOLUTION = "no_solution"

UNCONSTRAINED = "unconstrained"
CONSTRAINED = "constrained"

# Reported weights are clamped at zero; the solver guarantees raw values
# above this floor.
_NEGATIVE_FLOOR = -1e-8


@dataclass(frozen=True)
class MatchSpec:
    """What to match on and how.

    ``mode`` selects plain exact matching or exact matching with the
    between-means box rows. ``columns`` restricts matching to a subset of
    encoded column names (default: all). ``max_weight`` optionally caps
    every individual weight (off by default).
    """

    mode: str = UNCONSTRAINED
    columns: tuple[str, ...] | None = None
    max_weight: float | None = None

    def __post_init__(self):
        if self.mode not in (UNCONSTRAINED, CONSTRAINED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.columns is not None and len(self.columns) == 0:
            raise ValueError("column subset must be non-empty")
        if self.max_weight is not None and self.max_weight <= 0:
            raise ValueError("max_weight must be positive")


@dataclass
class BuildInfo:
    """Bookkeeping from constraint construction."""

    used_columns: tuple[str, ...]
    dropped_columns: tuple[str, ...]
    degenerate_box_columns: tuple[str, ...]


@dataclass
class WeightSolution:
    """Per-patient matching weights and their diagnostics.

    ``w0``/``w1`` are the reported (clamped) weights aligned with the rows
    of X0/X1; ``rows0``/``rows1`` map them back to original table rows.
    Weighted means are on the encoded scale over ``used_columns``.
    """

    status: str
    w0: np.ndarray | None
    w1: np.ndarray | None
    rows0: np.ndarray | None
    rows1: np.ndarray | None
    ess0: float
    ess1: float
    ess_combined: float
    objective: float
    used_columns: tuple[str, ...]
    dropped_columns: tuple[str, ...]
    degenerate_box_columns: tuple[str, ...]
    weighted_means0: np.ndarray | None
    weighted_means1: np.ndarray | None
    raw_min_weight: float = 0.0
    iterations: int = 0
    n_active: int = 0
    mode: str = UNCONSTRAINED

    @property
    def matched(self) -> bool:
        return self.status == MATCHED

    def scaled(self, total: float = 100.0) -> tuple[np.ndarray, np.ndarray]:
        """Weights rescaled to sum to ``total`` per study (plots, reports)."""
        if not self.matched:
            raise ValueError("no weights: solution status is no_solution")
        return (
            self.w0 * (total / self.w0.sum()),
            self.w1 * (total / self.w1.sum()),
        )

    def largest_standardized_weight(self) -> float:
        """Largest weight after standardizing to sum 100 per study.

        The same convention as the weight plots; the uniform reference is
        100/n_k per study.
        """
        w0n, w1n = self.scaled(100.0)
        return float(max(w0n.max(), w1n.max()))

    def to_json_dict(self) -> dict:
        out = {
            "status": self.status,
            "mode": self.mode,
            "objective": self.objective,
            "ess": {
                "study0": self.ess0,
                "study1": self.ess1,
                "combined": self.ess_combined,
            },
            "used_columns": list(self.used_columns),
            "dropped_columns": list(self.dropped_columns),
            "degenerate_box_columns": list(self.degenerate_box_columns),
            "raw_min_weight": self.raw_min_weight,
            "solver": {
                "iterations": self.iterations,
                "active_inequalities": self.n_active,
                "tolerances": dict(TOLERANCES),
            },
        }
        if self.matched:
            out["weights"] = {
                "study0": [float(w) for w in self.w0],
                "study1": [float(w) for w in self.w1],
            }
            out["row_indices"] = {
                "study0": [int(r) for r in self.rows0],
                "study1": [int(r) for r in self.rows1],
            }
            out["weight_sums"] = {
                "study0": float(self.w0.sum()),
                "study1": float(self.w1.sum()),
            }
            out["weighted_means"] = {
                name: {
                    "study0": float(self.weighted_means0[j]),
                    "study1": float(self.weighted_means1[j]),
                }
                for j, name in enumerate(self.used_columns)
            }
        return out

    def weight_rows(self):
        """Yield ``(row_index, study, weight)`` in original table order."""
        if not self.matched:
            return
        items = [(int(r), 0, float(w)) for r, w in zip(self.rows0, self.w0)]
        items += [(int(r), 1, float(w)) for r, w in zip(self.rows1, self.w1)]
        items.sort()
        yield from items


def ess(weights) -> float:
    """Effective sample size (sum w)^2 / sum w^2 of one weight group."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("weights must be 1-D")
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    denom = float(w @ w)
    if denom == 0.0:
        raise AllZeroWeightsError("ESS undefined for all-zero weights")
    s = float(w.sum())
    return s * s / denom


def _select_columns(dm: DesignMatrix, spec: MatchSpec) -> list[int]:
    if spec.columns is None:
        return list(range(dm.n_cols))
    name_to_idx = {name: j for j, name in enumerate(dm.column_names)}
    missing = [c for c in spec.columns if c not in name_to_idx]
    if missing:
        raise ValueError(f"unknown design columns: {missing}")
    return [name_to_idx[c] for c in spec.columns]


def build_qp(dm: DesignMatrix, spec: MatchSpec) -> tuple[QpProblem, BuildInfo]:
    """Assemble the matching QP for a design matrix.

    Columns that are constant with the same value in both studies carry a
    vacuous balance constraint; they are dropped with a
    :class:`DegenerateColumnWarning`.
    """
    n0, n1 = dm.X0.shape[0], dm.X1.shape[0]
    if n0 < 1 or n1 < 1:
        raise ValueError("both studies need at least one patient")
    n = n0 + n1

    cols = _select_columns(dm, spec)
    used: list[int] = []
    dropped: list[str] = []
    for j in cols:
        x0, x1 = dm.X0[:, j], dm.X1[:, j]
        if (x0 == x0[0]).all() and (x1 == x0[0]).all():
            dropped.append(dm.column_names[j])
        else:
            used.append(j)
    if dropped:
        warnings.warn(
            f"dropping constant columns with vacuous balance constraints: {dropped}",
            DegenerateColumnWarning,
            stacklevel=2,
        )

    p_used = len(used)
    X0u, X1u = dm.X0[:, used], dm.X1[:, used]

    eq_A = np.zeros((n, p_used + 2))
    eq_A[:n0, :p_used] = -X0u
    eq_A[n0:, :p_used] = X1u
    eq_A[:n0, p_used] = 1.0
    eq_A[n0:, p_used + 1] = 1.0
    eq_c = np.zeros(p_used + 2)
    eq_c[p_used] = 1.0
    eq_c[p_used + 1] = 1.0

    ineq_blocks = [np.eye(n)]
    ineq_rhs = [np.zeros(n)]
    degenerate_box: list[str] = []
    if spec.mode == CONSTRAINED:
        stacked = np.vstack([X0u, X1u])  # n x p_used
        m0 = X0u.mean(axis=0)
        m1 = X1u.mean(axis=0)
        lo = 2.0 * np.minimum(m0, m1)
        hi = 2.0 * np.maximum(m0, m1)
        degenerate_box = [
            dm.column_names[used[j]] for j in range(p_used) if lo[j] == hi[j]
        ]
        ineq_blocks.append(stacked)
        ineq_rhs.append(lo)
        ineq_blocks.append(-stacked)
        ineq_rhs.append(-hi)
    if spec.max_weight is not None:
        ineq_blocks.append(-np.eye(n))
        ineq_rhs.append(np.full(n, -spec.max_weight))

    problem = QpProblem(
        Q=np.eye(n),
        b=np.zeros(n),
        eq_A=eq_A,
        eq_c=eq_c,
        ineq_A=np.hstack(ineq_blocks),
        ineq_c=np.concatenate(ineq_rhs),
    )
    info = BuildInfo(
        used_columns=tuple(dm.column_names[j] for j in used),
        dropped_columns=tuple(dropped),
        degenerate_box_columns=tuple(degenerate_box),
    )
    return problem, info


def match(dm: DesignMatrix, spec: MatchSpec | None = None) -> WeightSolution:
    """Compute exact-matching weights maximizing ESS.

    Returns a solution with status ``matched``, or ``no_solution`` when no
    nonnegative weighting satisfies the constraints (disjoint convex
    hulls, or box rows that exclude the whole intersection).
    """
    if spec is None:
        spec = MatchSpec()
    problem, info = build_qp(dm, spec)
    sol = solve_qp(problem)
    if sol.status == INFEASIBLE:
        return WeightSolution(
            status=NO_SOLUTION,
            w0=None,
            w1=None,
            rows0=None,
            rows1=None,
            ess0=float("nan"),
            ess1=float("nan"),
            ess_combined=float("nan"),
            objective=float("nan"),
            used_columns=info.used_columns,
            dropped_columns=info.dropped_columns,
            degenerate_box_columns=info.degenerate_box_columns,
            weighted_means0=None,
            weighted_means1=None,
            iterations=sol.iterations,
            mode=spec.mode,
        )

    n0 = dm.X0.shape[0]
    raw = sol.w
    raw_min = float(raw.min())
    if raw_min < _NEGATIVE_FLOOR:
        raise AssertionError(
            f"solver returned weight {raw_min} below its feasibility floor"
        )
    w = np.where(raw < 0.0, 0.0, raw)
    w0, w1 = w[:n0], w[n0:]

    used_idx = [dm.column_names.index(c) for c in info.used_columns]
    wm0 = (w0 @ dm.X0[:, used_idx]) / w0.sum()
    wm1 = (w1 @ dm.X1[:, used_idx]) / w1.sum()

    return WeightSolution(
        status=MATCHED,
        w0=w0,
        w1=w1,
        rows0=dm.rows0,
        rows1=dm.rows1,
        ess0=ess(w0),
        ess1=ess(w1),
        ess_combined=ess(w),
        objective=float(w @ w),
        used_columns=info.used_columns,
        dropped_columns=info.dropped_columns,
        degenerate_box_columns=info.degenerate_box_columns,
        weighted_means0=wm0,
        weighted_means1=wm1,
        raw_min_weight=raw_min,
        iterations=sol.iterations,
        n_active=len(sol.active_set),
        mode=spec.mode,
    )
