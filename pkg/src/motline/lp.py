"""Dense linear programming via two-phase primal simplex.

Small, deterministic, dependency-free solver for the desk-scale programs used
throughout the package (transportation polytopes, martingale polytopes,
projection programs).  Pivoting uses Dantzig's rule with an automatic switch
to Bland's rule after a run of degenerate steps, which guarantees termination;
for a fixed program the pivot sequence, and hence the solution, is
reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError, InternalError

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-11
_DEGENERATE_SWITCH = 40  # consecutive degenerate pivots before Bland's rule kicks in

_debug_dump_path = None


def enable_debug_dump(path) -> None:
    """Append every solve's terminal tableau to ``path`` (None disables)."""
    global _debug_dump_path
    _debug_dump_path = path


def _dump_tableau(tableau: np.ndarray, basis: np.ndarray, label: str) -> None:
    if _debug_dump_path is None:
        return
    with open(_debug_dump_path, "a", encoding="utf-8") as handle:
        handle.write(f"# {label}: basis {basis.tolist()}\n")
        np.savetxt(handle, tableau, fmt="%.12g")
        handle.write("\n")


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """min c.x  s.t.  a_eq x = b_eq,  a_ub x <= b_ub,  lower <= x <= upper.

    ``lower`` defaults to 0 and ``upper`` to +inf for every variable.
    """

    objective: np.ndarray
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        if c.size == 0 or not np.all(np.isfinite(c)):
            raise InputError("objective must be a nonempty finite vector")
        n = c.size

        def shape_rows(a, b, name):
            if a is None or (hasattr(a, "__len__") and len(a) == 0):
                return np.zeros((0, n)), np.zeros(0)
            a = np.atleast_2d(np.asarray(a, dtype=float))
            b = np.asarray(b, dtype=float).ravel()
            if a.shape[1] != n or a.shape[0] != b.size:
                raise InputError(f"{name} rows must have length {n} and match rhs")
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                raise InputError(f"non-finite coefficient in {name}")
            return a, b

        a_eq, b_eq = shape_rows(self.a_eq, self.b_eq, "a_eq")
        a_ub, b_ub = shape_rows(self.a_ub, self.b_ub, "a_ub")
        lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if lower.size != n or upper.size != n:
            raise InputError("bounds must have one entry per variable")
        if not np.all(np.isfinite(lower)) or np.any(np.isnan(upper)):
            raise InputError("lower bounds must be finite, upper bounds finite or +inf")
        if np.any(upper < lower):
            raise InputError("upper bound below lower bound")
        for name, arr in (("objective", c), ("a_eq", a_eq), ("b_eq", b_eq),
                          ("a_ub", a_ub), ("b_ub", b_ub), ("lower", lower), ("upper", upper)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_vars(self) -> int:
        return int(self.objective.size)


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: Optional[np.ndarray]
    objective: Optional[float]
    max_violation: float = 0.0


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    tableau[:, col] = 0.0
    tableau[row, col] = 1.0
    basis[row] = col
    rhs = tableau[:-1, -1]
    rhs[(rhs < 0) & (rhs > -1e-12)] = 0.0


def _run_simplex(tableau: np.ndarray, basis: np.ndarray, allowed: np.ndarray) -> str:
    """Iterate pivots on a tableau whose last row holds reduced costs.

    Returns "optimal" or "unbounded".  ``allowed`` masks columns eligible to
    enter the basis.
    """
    m = tableau.shape[0] - 1
    n_total = tableau.shape[1] - 1
    bland = False
    degenerate_run = 0
    max_iter = 5000 + 50 * (m + n_total)
    for _ in range(max_iter):
        reduced = tableau[-1, :-1]
        if bland:
            candidates = np.flatnonzero(allowed & (reduced < -FEAS_TOL))
            if candidates.size == 0:
                return "optimal"
            enter = int(candidates[0])
        else:
            masked = np.where(allowed, reduced, np.inf)
            enter = int(np.argmin(masked))
            if masked[enter] >= -FEAS_TOL:
                return "optimal"
        col = tableau[:-1, enter]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded"
        ratios = np.maximum(tableau[rows, -1], 0.0) / col[rows]
        best = ratios.min()
        # ties must stay essentially exact: a loose tie window can pick a row
        # above the true minimum and drive basic variables negative
        ties = rows[ratios <= best + 1e-12 * (1.0 + best)]
        if bland:
            # Bland: leave on the smallest basic index among ties
            leave = int(ties[np.argmin(basis[ties])])
        else:
            # stabilizing tie-break: the largest pivot element
            leave = int(ties[np.argmax(col[ties])])
        if best <= FEAS_TOL:
            degenerate_run += 1
            if degenerate_run > _DEGENERATE_SWITCH:
                bland = True
        else:
            degenerate_run = 0
            bland = False
        _pivot(tableau, basis, leave, enter)
    raise InternalError("simplex iteration limit exceeded")


def _set_objective_row(tableau: np.ndarray, basis: np.ndarray, costs: np.ndarray) -> None:
    tableau[-1, :] = 0.0
    tableau[-1, : costs.size] = costs
    for i, b in enumerate(basis):
        cb = tableau[-1, b]
        if cb != 0.0:
            tableau[-1] -= cb * tableau[i]


def _independent_rows(a: np.ndarray, b: np.ndarray):
    """Gaussian elimination over the rows of [a | b].

    Returns (kept row indices, None) or (None, violation) when a dependent
    row's right-hand side is inconsistent with the rows it depends on, which
    certifies infeasibility.  Dependent rows carry no information beyond their
    consistency, and keeping them lets simplex pivots corrupt the basis.
    """
    m, n = a.shape
    work = np.column_stack([a, b]).astype(float)
    reduced_rows = []
    pivot_cols = []
    kept = []
    worst = 0.0
    for i in range(m):
        row = work[i].copy()
        for r, pc in zip(reduced_rows, pivot_cols):
            factor = row[pc]
            if factor != 0.0:
                row -= factor * r
        row_scale = 1.0 + float(np.max(np.abs(a[i]))) if n else 1.0
        mag = float(np.max(np.abs(row[:n]))) if n else 0.0
        if mag > 1e-10 * row_scale:
            pc = int(np.argmax(np.abs(row[:n])))
            reduced_rows.append(row / row[pc])
            pivot_cols.append(pc)
            kept.append(i)
        else:
            worst = max(worst, abs(float(row[n])))
    if worst > FEAS_TOL * (1.0 + float(np.max(np.abs(b))) if b.size else 1.0):
        return None, worst
    return kept, None


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve the program, returning an optimal basic solution when one exists."""
    n = lp.n_vars
    # shift to nonnegative variables: y = x - lower
    b_eq = lp.b_eq - lp.a_eq @ lp.lower if lp.a_eq.shape[0] else lp.b_eq.copy()
    a_ub_rows = [lp.a_ub] if lp.a_ub.shape[0] else []
    b_ub_rows = [lp.b_ub - lp.a_ub @ lp.lower] if lp.a_ub.shape[0] else []
    finite_ub = np.flatnonzero(np.isfinite(lp.upper))
    if finite_ub.size:
        bound_rows = np.zeros((finite_ub.size, n))
        bound_rows[np.arange(finite_ub.size), finite_ub] = 1.0
        a_ub_rows.append(bound_rows)
        b_ub_rows.append(lp.upper[finite_ub] - lp.lower[finite_ub])
    a_ub = np.vstack(a_ub_rows) if a_ub_rows else np.zeros((0, n))
    b_ub = np.concatenate(b_ub_rows) if b_ub_rows else np.zeros(0)

    m_eq, m_ub = lp.a_eq.shape[0], a_ub.shape[0]
    m = m_eq + m_ub
    n_slack = m_ub
    a = np.zeros((m, n + n_slack))
    b = np.concatenate([b_eq, b_ub])
    if m_eq:
        a[:m_eq, :n] = lp.a_eq
    if m_ub:
        a[m_eq:, :n] = a_ub
        a[m_eq:, n:] = np.eye(m_ub)
    negative = b < 0
    a[negative] *= -1.0
    b[negative] *= -1.0

    # eliminate linearly dependent rows up front: they add no information and
    # noise in their direction lets pivots build a singular basis
    slack_col = np.full(m, -1, dtype=int)
    if m_ub:
        for j in range(m_ub):
            if not negative[m_eq + j]:
                slack_col[m_eq + j] = n + j
    if m:
        kept_idx, inconsistency = _independent_rows(a, b)
        if kept_idx is None:
            return LpSolution("infeasible", None, None, max_violation=float(inconsistency))
        if len(kept_idx) < m:
            a = a[kept_idx]
            b = b[kept_idx]
            slack_col = slack_col[kept_idx]
            m = len(kept_idx)
    # artificial variables wherever no slack can serve as the initial basis
    art_rows = np.flatnonzero(slack_col < 0)
    n_art = art_rows.size
    total = n + n_slack + n_art
    tableau = np.zeros((m + 1, total + 1))
    tableau[:m, : n + n_slack] = a
    tableau[:m, -1] = b
    basis = np.empty(m, dtype=int)
    for i in range(m):
        if slack_col[i] >= 0:
            basis[i] = slack_col[i]
    for k, i in enumerate(art_rows):
        col = n + n_slack + k
        tableau[i, col] = 1.0
        basis[i] = col

    if n_art:
        allowed = np.ones(total, dtype=bool)
        allowed[n + n_slack :] = False  # artificials never re-enter
        phase1 = np.zeros(total)
        phase1[n + n_slack :] = 1.0
        _set_objective_row(tableau, basis, phase1)
        status = _run_simplex(tableau, basis, allowed)
        if status != "optimal":
            raise InternalError("phase-1 simplex cannot be unbounded")
        if -tableau[-1, -1] > FEAS_TOL:
            return LpSolution("infeasible", None, None, max_violation=float(-tableau[-1, -1]))
        if np.any(basis >= n + n_slack):
            # rebuild the tableau exactly from the terminal basis: the pivoted
            # rows drift, and redundancy decisions must not be made on noise
            ext = np.zeros((m, total))
            ext[:, : n + n_slack] = a
            for k, i in enumerate(art_rows):
                ext[i, n + n_slack + k] = 1.0
            fresh = np.linalg.lstsq(ext[:, basis], np.column_stack([ext, b]), rcond=None)[0]
            tableau = np.zeros((m + 1, total + 1))
            tableau[:m] = fresh
            tableau[np.arange(m), basis] = 1.0
        # drive leftover artificials out of the basis; a row whose exact image
        # vanishes outside the artificial block is redundant and is dropped
        keep_rows = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= n + n_slack:
                row = tableau[i, : n + n_slack]
                pivot_col = int(np.argmax(np.abs(row)))
                if abs(row[pivot_col]) > FEAS_TOL:
                    _pivot(tableau, basis, i, pivot_col)
                else:
                    keep_rows[i] = False
        rows = np.concatenate([np.flatnonzero(keep_rows), [m]])
        tableau = tableau[rows][:, np.r_[0 : n + n_slack, total]]
        basis = basis[keep_rows]
        a = a[keep_rows]
        b = b[keep_rows]

    # phase 2 with iterative basis refinement: tableau updates drift over many
    # pivots, so after each simplex run the basic solution and reduced costs
    # are recomputed exactly from the original rows; if that exact view is not
    # optimal yet, the tableau is rebuilt from the basis and pivoting resumes
    costs = np.concatenate([lp.objective, np.zeros(n_slack)])
    allowed = np.ones(n + n_slack, dtype=bool)
    m_kept = a.shape[0]
    scale = 1.0 + float(np.max(np.abs(costs)))
    x_std = None
    seen = set()
    for _ in range(8):
        _set_objective_row(tableau, basis, costs)
        status = _run_simplex(tableau, basis, allowed)
        _dump_tableau(tableau, basis, f"phase 2 ({status})")
        if status == "unbounded":
            return LpSolution("unbounded", None, None)
        basis_cols = a[:, basis]
        xb, *_ = np.linalg.lstsq(basis_cols, b, rcond=None)
        dual, *_ = np.linalg.lstsq(basis_cols.T, costs[basis], rcond=None)
        reduced = costs - dual @ a
        x_std = np.zeros(n + n_slack)
        x_std[basis] = np.maximum(xb, 0.0)
        key = tuple(np.sort(basis))
        xb_min = float(xb.min()) if xb.size else 0.0
        if reduced.min() >= -1e-9 * scale and xb_min >= -1e-8:
            break
        if key in seen:
            break  # tableau and exact view disagree within noise; keep exact
        seen.add(key)
        fresh = np.linalg.lstsq(basis_cols, np.column_stack([a, b]), rcond=None)[0]
        tableau = np.zeros((m_kept + 1, n + n_slack + 1))
        tableau[:m_kept] = fresh
        tableau[np.arange(m_kept), basis] = 1.0
    else:
        raise InternalError("phase-2 refinement did not converge")

    x = np.maximum(x_std[:n], 0.0) + lp.lower
    objective = float(np.dot(lp.objective, x))
    violation = 0.0
    if lp.a_eq.shape[0]:
        violation = max(violation, float(np.max(np.abs(lp.a_eq @ x - lp.b_eq))))
    if lp.a_ub.shape[0]:
        violation = max(violation, float(np.max(np.maximum(lp.a_ub @ x - lp.b_ub, 0.0))))
    violation = max(violation, float(np.max(np.maximum(lp.lower - x, 0.0))))
    finite = np.isfinite(lp.upper)
    if np.any(finite):
        violation = max(violation, float(np.max(np.maximum(x[finite] - lp.upper[finite], 0.0))))
    return LpSolution("optimal", x, objective, max_violation=violation)
