"""Existence check for nonnegative solutions of a linear equality system.

Answers "is there w >= 0 with eq_A'w = eq_c?" by running phase one of the
simplex method on a dense tableau with artificial variables, using Bland's
rule so the iteration cannot cycle. The optimum of the artificial-variable
sum is zero exactly when the system is feasible.

Problem sizes here are small: the matching use case has one row per
encoded covariate column plus two normalization rows.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, SolverStalledError
from .linalg import as_matrix, as_vector

__all__ = ["LpFeasibilityProblem", "FeasibilityResult", "is_feasible"]

FEASIBILITY_TOL = 1e-8
_PIVOT_TOL = 1e-11
_COST_TOL = 1e-9


@dataclass
class LpFeasibilityProblem:
    """System eq_A'w = eq_c, w >= 0; ``eq_A`` holds one constraint per column."""

    eq_A: np.ndarray
    eq_c: np.ndarray

    def __post_init__(self):
        self.eq_A = as_matrix(self.eq_A, "eq_A")
        self.eq_c = as_vector(self.eq_c, "eq_c")
        if self.eq_A.shape[1] != self.eq_c.shape[0]:
            raise DimensionMismatchError("eq_A / eq_c sizes disagree")


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    witness: np.ndarray | None
    phase1_objective: float


def is_feasible(p: LpFeasibilityProblem) -> FeasibilityResult:
    """Phase-1 simplex existence check.

    Returns a witness w >= 0 with ``max |eq_A'w - eq_c| <= 1e-8`` when the
    system is feasible, and ``feasible=False`` when the phase-1 optimum of
    the artificial-variable sum exceeds the tolerance.
    """
    M = p.eq_A.T.copy()  # m x n rows of the system
    c = p.eq_c.copy()
    m, n = M.shape
    if m == 0:
        return FeasibilityResult(True, np.zeros(n), 0.0)

    neg = c < 0
    M[neg] *= -1.0
    c[neg] *= -1.0

    # Tableau columns: n original variables then m artificials; the basis
    # starts as the artificials, whose sum is the phase-1 objective.
    T = np.hstack([M, np.eye(m)])
    b = c
    basis = np.arange(n, n + m)
    red = np.concatenate([-M.sum(axis=0), np.zeros(m)])
    # An artificial that leaves the basis never needs to re-enter.
    blocked = np.zeros(n + m, dtype=bool)

    budget = 10_000 + 200 * (m + n)
    for _ in range(budget):
        eligible = np.nonzero((red < -_COST_TOL) & ~blocked)[0]
        if eligible.size == 0:
            break
        entering = int(eligible[0])  # Bland: lowest eligible index enters

        col = T[:, entering]
        rows = np.nonzero(col > _PIVOT_TOL)[0]
        if rows.size == 0:
            # The phase-1 objective is bounded below by zero, so an
            # unbounded ray can only be numerical noise.
            raise SolverStalledError("no pivot row for entering column")
        ratios = b[rows] / col[rows]
        best = ratios.min()
        cand = rows[ratios <= best + _PIVOT_TOL]
        leave = int(cand[np.argmin(basis[cand])])  # Bland: lowest basic index

        piv = T[leave, entering]
        T[leave] /= piv
        b[leave] /= piv
        factors = T[:, entering].copy()
        factors[leave] = 0.0
        T -= np.outer(factors, T[leave])
        b -= factors * b[leave]
        red -= red[entering] * T[leave]
        if basis[leave] >= n:
            blocked[basis[leave]] = True
        basis[leave] = entering
        np.clip(b, 0.0, None, out=b)
    else:
        raise SolverStalledError("phase-1 simplex exceeded its step budget")

    obj = float(sum(b[i] for i in range(m) if basis[i] >= n))
    if obj > FEASIBILITY_TOL:
        return FeasibilityResult(False, None, obj)

    w = np.zeros(n)
    for i in range(m):
        if basis[i] < n:
            w[basis[i]] = b[i]
    return FeasibilityResult(True, w, obj)
