"""Strictly convex quadratic programming by the dual active-set method.

Solves

    minimize    b'w + w'Qw
    subject to  eq_A'w  = eq_c
                ineq_A'w >= ineq_c

for symmetric positive-definite Q. Constraint matrices hold one constraint
per *column* (normals), matching the stacked-matrix convention used by the
matching pipeline.

The solver starts from the unconstrained minimum and adds violated
constraints one at a time, taking primal and dual steps until the iterate
is feasible; for strictly convex objectives this terminates in finitely
many steps. An unbounded dual step proves the constraints inconsistent and
is reported as ``status == "infeasible"`` rather than raised: downstream
callers treat "no feasible weighting exists" as a normal outcome.

Internally the method maintains J = L^{-T} @ Qo and upper-triangular R with
L L' = 2Q and L^{-1} N = Qo [R; 0] for the active normals N; adding a
constraint appends a column to R via one Householder reflection applied to
the trailing columns of J, dropping one restores triangularity with Givens
rotations.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg.blas import dger
from scipy.linalg.lapack import dtrtrs

from .errors import (
    DegenerateEqualitiesError,
    DimensionMismatchError,
    SolverStalledError,
)
from .linalg import as_matrix, as_vector, cholesky

__all__ = ["QpProblem", "QpSolution", "KktReport", "solve_qp", "check_kkt"]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"

# Declared solver tolerances. The reference values in reports come from
# here so that discrepancies with other solvers are attributable.
FEASIBILITY_TOL = 1e-9
DEPENDENCE_TOL = 1e-10
BLOCKING_TOL = 1e-12

TOLERANCES = {
    "feasibility": FEASIBILITY_TOL,
    "dependence": DEPENDENCE_TOL,
    "blocking": BLOCKING_TOL,
}


def _empty_constraints(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.zeros((n, 0)), np.zeros(0)


@dataclass
class QpProblem:
    """Quadratic program in the canonical matching form.

    Q must be symmetric positive definite (verified by Cholesky on
    construction). ``eq_A`` / ``ineq_A`` are n x m matrices whose columns
    are constraint normals.
    """

    Q: np.ndarray
    b: np.ndarray
    eq_A: np.ndarray | None = None
    eq_c: np.ndarray | None = None
    ineq_A: np.ndarray | None = None
    ineq_c: np.ndarray | None = None
    _q_identity: bool = field(init=False, repr=False, default=False)
    _chol_lower: np.ndarray | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.Q = as_matrix(self.Q, "Q")
        n = self.Q.shape[0]
        self.b = as_vector(self.b, "b")
        if self.b.shape[0] != n:
            raise DimensionMismatchError("b length does not match Q")
        if self.eq_A is None:
            self.eq_A, self.eq_c = _empty_constraints(n)
        self.eq_A = np.asfortranarray(as_matrix(self.eq_A, "eq_A"))
        self.eq_c = as_vector(
            self.eq_c if self.eq_c is not None else np.zeros(self.eq_A.shape[1]),
            "eq_c",
        )
        if self.ineq_A is None:
            self.ineq_A, self.ineq_c = _empty_constraints(n)
        self.ineq_A = np.asfortranarray(as_matrix(self.ineq_A, "ineq_A"))
        self.ineq_c = as_vector(
            self.ineq_c
            if self.ineq_c is not None
            else np.zeros(self.ineq_A.shape[1]),
            "ineq_c",
        )
        if self.eq_A.shape[0] != n or self.ineq_A.shape[0] != n:
            raise DimensionMismatchError("constraint normals must have n rows")
        if self.eq_A.shape[1] != self.eq_c.shape[0]:
            raise DimensionMismatchError("eq_A / eq_c sizes disagree")
        if self.ineq_A.shape[1] != self.ineq_c.shape[0]:
            raise DimensionMismatchError("ineq_A / ineq_c sizes disagree")

        # Q = I is by far the common case (minimum-norm weights); skip the
        # factorization there, verify SPD by Cholesky otherwise.
        self._q_identity = bool(
            np.count_nonzero(self.Q) == n and np.all(self.Q.diagonal() == 1.0)
        )
        if not self._q_identity:
            self._chol_lower = cholesky(self.Q).lower

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def n_eq(self) -> int:
        return self.eq_A.shape[1]

    @property
    def n_ineq(self) -> int:
        return self.ineq_A.shape[1]

    def objective(self, w: np.ndarray) -> float:
        if self._q_identity:
            return float(w @ w + self.b @ w)
        return float(w @ (self.Q @ w) + self.b @ w)


@dataclass
class QpSolution:
    """Result of ``solve_qp``.

    ``active_set`` lists the binding inequality constraints (0-based column
    indices into ``ineq_A``). ``lagrange_multipliers`` concatenates the
    equality multipliers (length m_e, free sign) with the full-length
    inequality multipliers (length m_i, zero for inactive constraints), so
    that stationarity reads 2Qw + b = eq_A @ lam_e + ineq_A @ lam_i.
    """

    status: str
    w: np.ndarray | None
    objective: float
    active_set: tuple[int, ...]
    lagrange_multipliers: np.ndarray | None
    iterations: int

    @property
    def eq_multipliers(self) -> np.ndarray | None:
        if self.lagrange_multipliers is None:
            return None
        return self.lagrange_multipliers[: self._n_eq]

    @property
    def ineq_multipliers(self) -> np.ndarray | None:
        if self.lagrange_multipliers is None:
            return None
        return self.lagrange_multipliers[self._n_eq :]

    _n_eq: int = 0


@dataclass(frozen=True)
class KktReport:
    """Worst-case KKT violations of a claimed-optimal solution."""

    primal_residual: float
    dual_violation: float
    complementarity_gap: float


def solve_qp(p: QpProblem) -> QpSolution:
    """Solve the QP; returns an optimal or infeasible solution object.

    Raises
    ------
    DegenerateEqualitiesError
        If a violated equality constraint is linearly dependent on the
        other equalities (e.g. contradictory duplicated rows).
    SolverStalledError
        If the iteration budget 50 * (n + m_i) is exceeded.
    """
    n, m_e, m_i = p.n, p.n_eq, p.n_ineq

    if p._q_identity:
        # L = sqrt(2) I for G = 2Q = 2I.
        J = np.zeros((n, n), order="F")
        np.fill_diagonal(J, 1.0 / math.sqrt(2.0))
        x = -0.5 * p.b
    else:
        lower = math.sqrt(2.0) * p._chol_lower  # chol(2Q)
        J = np.asfortranarray(
            scipy.linalg.solve_triangular(lower, np.eye(n), lower=True, trans="T")
        )
        y = scipy.linalg.solve_triangular(lower, -p.b, lower=True)
        x = scipy.linalg.solve_triangular(lower, y, lower=True, trans="T")

    # Columns of ineq_A with a single nonzero entry (the nonnegativity
    # block of the matching problem is an identity) admit O(n) slack reads
    # and factor projections; split them from the dense columns once.
    nnz = np.count_nonzero(p.ineq_A, axis=0) if m_i else np.zeros(0, dtype=int)
    unit_idx = np.nonzero(nnz == 1)[0]
    unit_rows = (
        np.abs(p.ineq_A[:, unit_idx]).argmax(axis=0)
        if unit_idx.size
        else np.zeros(0, dtype=np.intp)
    )
    unit_vals = (
        p.ineq_A[unit_rows, unit_idx] if unit_idx.size else np.zeros(0)
    )
    dense_idx = np.nonzero(nnz != 1)[0]
    dense_A = np.asfortranarray(p.ineq_A[:, dense_idx]) if dense_idx.size else None
    is_unit = np.zeros(m_i, dtype=bool)
    is_unit[unit_idx] = True
    unit_row_of = np.full(m_i, -1, dtype=np.intp)
    unit_row_of[unit_idx] = unit_rows
    unit_val_of = np.zeros(m_i)
    unit_val_of[unit_idx] = unit_vals
    slack_buf = np.empty(m_i)

    R = np.zeros((n, n), order="F")
    u = np.zeros(n)
    active_ids = np.zeros(n, dtype=np.intp)  # < m_e equality, else m_e + ineq idx
    active_sign = np.ones(n)  # equality normals may enter negated
    q = 0

    eq_active = np.zeros(m_e, dtype=bool)
    ineq_active = np.zeros(m_i, dtype=bool)

    budget = 50 * (n + m_i)
    steps = 0

    def ineq_slacks() -> np.ndarray:
        if unit_idx.size:
            slack_buf[unit_idx] = unit_vals * x[unit_rows] - p.ineq_c[unit_idx]
        if dense_idx.size:
            slack_buf[dense_idx] = dense_A.T @ x - p.ineq_c[dense_idx]
        return slack_buf

    def drop(pos: int) -> None:
        """Remove the active constraint at position ``pos``."""
        nonlocal q
        cid = active_ids[pos]
        if cid >= m_e:
            ineq_active[cid - m_e] = False
        else:  # pragma: no cover - equalities are never dropped
            eq_active[cid] = False
        if pos < q - 1:
            active_ids[pos : q - 1] = active_ids[pos + 1 : q]
            active_sign[pos : q - 1] = active_sign[pos + 1 : q]
            u[pos : q - 1] = u[pos + 1 : q]
            R[:q, pos : q - 1] = R[:q, pos + 1 : q]
        q -= 1
        # Restore the triangular factor: chase the subdiagonal introduced
        # by the column removal with Givens rotations, mirroring each
        # rotation on the corresponding column pair of J.
        for j in range(pos, q):
            a, bb = R[j, j], R[j + 1, j]
            if bb == 0.0:
                continue
            rr = math.hypot(a, bb)
            c, s = a / rr, bb / rr
            if j + 1 < q:
                rj = c * R[j, j + 1 : q] + s * R[j + 1, j + 1 : q]
                R[j + 1, j + 1 : q] = -s * R[j, j + 1 : q] + c * R[j + 1, j + 1 : q]
                R[j, j + 1 : q] = rj
            R[j, j] = rr
            R[j + 1, j] = 0.0
            cj = c * J[:, j] + s * J[:, j + 1]
            J[:, j + 1] = -s * J[:, j] + c * J[:, j + 1]
            J[:, j] = cj

    def add(cid: int, sign: float, d: np.ndarray, z: np.ndarray) -> None:
        """Append the constraint with precomputed d = J' n+ and z = J2 d2."""
        nonlocal q
        d2 = d[q:]
        if d2.shape[0] == 1:
            delta = d2[0]
        else:
            alpha = math.sqrt(float(d2 @ d2))
            v = d2.copy()
            if v[0] >= 0.0:
                v[0] += alpha
                delta = -alpha
            else:
                v[0] -= alpha
                delta = alpha
            vtv = float(v @ v)
            if vtv > 0.0:
                # v differs from d2 only in its first entry, so
                # J2 v = z + (v0 - d2[0]) * (first column of J2).
                Jv = z + (v[0] - d2[0]) * J[:, q]
                dger(-2.0 / vtv, Jv, v, a=J[:, q:], overwrite_a=1)
        R[:q, q] = d[:q]
        R[q, q] = delta
        active_ids[q] = cid
        active_sign[q] = sign
        if cid >= m_e:
            ineq_active[cid - m_e] = True
        else:
            eq_active[cid] = True
        q += 1

    while True:
        # Pick the next violated constraint: equalities first (largest
        # absolute slack), then inequalities (most negative slack); ties
        # resolve to the lowest index because argmax/argmin return the
        # first occurrence.
        chosen_eq = False
        cid = -1
        if m_e and not eq_active.all():
            eq_slack = p.eq_A.T @ x - p.eq_c
            viol = np.abs(eq_slack)
            viol[eq_active] = 0.0
            k = int(np.argmax(viol))
            if viol[k] > FEASIBILITY_TOL:
                chosen_eq = True
                cid = k
                sign = -1.0 if eq_slack[k] > 0.0 else 1.0
                n_plus = sign * p.eq_A[:, k]
                s = sign * eq_slack[k]
        if not chosen_eq:
            if m_i:
                ineq_slack = ineq_slacks()
                ineq_slack[ineq_active] = 0.0
                k = int(np.argmin(ineq_slack))
                if ineq_slack[k] >= -FEASIBILITY_TOL:
                    break  # feasible, hence optimal
                cid = m_e + k
                sign = 1.0
                n_plus = None  # fetched lazily; unit columns skip the GEMV
                s = float(ineq_slack[k])
            else:
                break

        u_new = 0.0
        while True:
            steps += 1
            if steps > budget:
                raise SolverStalledError(
                    f"exceeded {budget} active-set steps (n={n}, m_i={m_i})"
                )
            if chosen_eq:
                d = J.T @ n_plus
            else:
                kk = cid - m_e
                if is_unit[kk]:
                    d = unit_val_of[kk] * J[unit_row_of[kk], :]
                else:
                    if n_plus is None:
                        n_plus = p.ineq_A[:, kk]
                    d = J.T @ n_plus
            d2 = d[q:]
            znorm2 = float(d2 @ d2)
            dep = math.sqrt(znorm2) <= DEPENDENCE_TOL * max(
                1.0, math.sqrt(float(d @ d))
            )
            r = dtrtrs(R[:q, :q], d[:q], lower=0)[0] if q else np.zeros(0)

            # Longest dual step before an active inequality multiplier
            # would turn negative.
            t1 = math.inf
            block = -1
            if q:
                is_ineq = active_ids[:q] >= m_e
                cand = is_ineq & (r > BLOCKING_TOL)
                if cand.any():
                    idx = np.nonzero(cand)[0]
                    ratios = u[:q][idx] / r[idx]
                    jmin = int(np.argmin(ratios))
                    t1 = float(ratios[jmin])
                    block = int(idx[jmin])

            if dep:
                if not math.isfinite(t1):
                    # The dual can increase without bound: no feasible
                    # point exists. If only equalities are active, the
                    # equality block itself is dependent/contradictory.
                    if chosen_eq and not ineq_active.any():
                        raise DegenerateEqualitiesError(
                            "equality constraints are linearly dependent "
                            "and cannot all be satisfied"
                        )
                    return QpSolution(
                        status=INFEASIBLE,
                        w=None,
                        objective=math.inf,
                        active_set=(),
                        lagrange_multipliers=None,
                        iterations=steps,
                        _n_eq=m_e,
                    )
                u[:q] -= t1 * r
                u_new += t1
                drop(block)
                continue

            t2 = -s / znorm2
            t = min(t1, t2)
            z = J[:, q:] @ d2
            x += t * z
            if q:
                u[:q] -= t * r
            u_new += t
            if t2 <= t1:
                add(cid, sign, d, z)
                u[q - 1] = u_new
                break
            if chosen_eq:
                s = float(n_plus @ x) - sign * p.eq_c[cid]
            else:
                kk = cid - m_e
                if is_unit[kk]:
                    s = unit_val_of[kk] * x[unit_row_of[kk]] - p.ineq_c[kk]
                else:
                    s = float(n_plus @ x) - p.ineq_c[kk]
            drop(block)

    # Polish: re-project onto the active constraints to shed the small
    # drift accumulated over many factor updates.
    if q:
        cols = active_ids[:q]
        normals = np.empty((n, q), order="F")
        rhs = np.empty(q)
        for j in range(q):
            cid = cols[j]
            if cid < m_e:
                normals[:, j] = active_sign[j] * p.eq_A[:, cid]
                rhs[j] = active_sign[j] * p.eq_c[cid]
            else:
                normals[:, j] = p.ineq_A[:, cid - m_e]
                rhs[j] = p.ineq_c[cid - m_e]
        res = normals.T @ x - rhs
        if np.abs(res).max() > 1e-13:
            corr = scipy.linalg.solve_triangular(
                R[:q, :q], res, lower=False, trans="T"
            )
            x -= J[:, :q] @ corr

    lam = np.zeros(m_e + m_i)
    for j in range(q):
        cid = active_ids[j]
        lam[cid] = active_sign[j] * u[j] if cid < m_e else u[j]
    active = tuple(sorted(int(c - m_e) for c in active_ids[:q] if c >= m_e))
    return QpSolution(
        status=OPTIMAL,
        w=x,
        objective=p.objective(x),
        active_set=active,
        lagrange_multipliers=lam,
        iterations=steps,
        _n_eq=m_e,
    )


def check_kkt(p: QpProblem, s: QpSolution) -> KktReport:
    """Independently measure KKT violations of an optimal solution.

    Recomputes every quantity from the problem data; shares no state with
    the solver beyond the solution object itself.
    """
    if s.status != OPTIMAL:
        raise ValueError("check_kkt requires an optimal solution")
    w = s.w
    lam_e = s.lagrange_multipliers[: p.n_eq]
    lam_i = s.lagrange_multipliers[p.n_eq :]

    primal = 0.0
    if p.n_eq:
        primal = float(np.abs(p.eq_A.T @ w - p.eq_c).max())
    ineq_slack = None
    if p.n_ineq:
        ineq_slack = p.ineq_A.T @ w - p.ineq_c
        primal = max(primal, float(max(0.0, -ineq_slack.min())))

    grad = 2.0 * (p.Q @ w) + p.b
    stat = grad
    if p.n_eq:
        stat = stat - p.eq_A @ lam_e
    if p.n_ineq:
        stat = stat - p.ineq_A @ lam_i
    dual = float(np.abs(stat).max()) if stat.size else 0.0
    if p.n_ineq:
        dual = max(dual, float(max(0.0, -lam_i.min())))

    comp = 0.0
    if p.n_ineq:
        comp = float(np.abs(lam_i * ineq_slack).max())
    return KktReport(
        primal_residual=primal,
        dual_violation=dual,
        complementarity_gap=comp,
    )
