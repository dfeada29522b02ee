"""Small dense linear-programming kernel.

Two-phase primal simplex on a full tableau with Bland's rule. The
polytope routines in this package pose tiny problems (2-4 free
variables plus slacks, at most a few hundred rows) where an exactly
reproducible verdict matters far more than speed, so the dense tableau
is the simplest thing that always gives the same answer.

Problems are stated as ``min c @ x  s.t.  A @ x <= b`` with ``x`` free;
free variables are split internally as ``x = xp - xn``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndecidedError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_PIVOT_TOL = 1e-10
_DEFAULT_MAX_PIVOTS = 5000


@dataclass(frozen=True)
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float | None


def _bland_step(T, basis, max_pivots):
    """Run simplex pivots on tableau T until optimal or unbounded.

    T has shape (m+1, ncols+1): m constraint rows, reduced-cost row
    last, right-hand side in the last column. Returns a status; the
    tableau and basis are updated in place.
    """
    m = T.shape[0] - 1
    ncols = T.shape[1] - 1
    for _ in range(max_pivots):
        red = T[-1, :ncols]
        entering_candidates = np.nonzero(red < -_PIVOT_TOL)[0]
        if entering_candidates.size == 0:
            return OPTIMAL
        enter = int(entering_candidates[0])  # Bland: lowest index
        col = T[:m, enter]
        rows = np.nonzero(col > _PIVOT_TOL)[0]
        if rows.size == 0:
            return UNBOUNDED
        ratios = T[rows, -1] / col[rows]
        rmin = ratios.min()
        ties = rows[ratios <= rmin + 1e-12]
        # Bland again: among minimal ratios leave the lowest basis index
        leave = int(ties[np.argmin([basis[i] for i in ties])])
        _pivot(T, basis, leave, enter)
    raise UndecidedError("simplex pivot limit exceeded")


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    # outer-product update can leave a tiny residue in the pivot column
    T[:, col] = 0.0
    T[row, col] = 1.0
    basis[row] = col


def _phase_one(A, b, max_pivots):
    """Feasibility tableau for A x <= b with x free.

    Returns (T, basis, n_struct) after driving the artificial cost to
    its minimum; the caller inspects T[-1, -1] for the verdict.
    Structural columns are [xp, xn, slack]; artificials come last.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    M = np.hstack([A, -A, np.eye(m)])
    rhs = b.copy()
    flip = rhs < 0
    M[flip] *= -1.0
    rhs[flip] *= -1.0

    n_struct = M.shape[1]
    T = np.zeros((m + 1, n_struct + m + 1))
    T[:m, :n_struct] = M
    T[:m, n_struct:n_struct + m] = np.eye(m)
    T[:m, -1] = rhs
    # phase-1 cost: sum of artificials; zero out the basic columns
    T[-1, n_struct:n_struct + m] = 1.0
    T[-1] -= T[:m].sum(axis=0)
    basis = list(range(n_struct, n_struct + m))
    status = _bland_step(T, basis, max_pivots)
    if status != OPTIMAL:  # phase-1 objective is bounded below by 0
        raise UndecidedError("phase-1 simplex did not terminate cleanly")
    return T, basis, n_struct


def feasible_point(A, b, feas_tol=1e-8, max_pivots=_DEFAULT_MAX_PIVOTS):
    """Return (feasible, x) for the system A x <= b with x free.

    Raises UndecidedError instead of guessing when the pivot budget
    runs out.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    if m == 0:
        return True, np.zeros(n)
    T, basis, n_struct = _phase_one(A, b, max_pivots)
    residual = -T[-1, -1]
    if residual > feas_tol:
        return False, None
    x = _extract(T, basis, n_struct, n)
    return True, x


def solve_lp(c, A, b, max_pivots=_DEFAULT_MAX_PIVOTS):
    """Minimize c @ x subject to A x <= b, x free."""
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if m == 0:
        if np.any(np.abs(c) > _PIVOT_TOL):
            return LpResult(UNBOUNDED, None, None)
        return LpResult(OPTIMAL, np.zeros(n), 0.0)

    T, basis, n_struct = _phase_one(A, b, max_pivots)
    if -T[-1, -1] > 1e-8:
        return LpResult(INFEASIBLE, None, None)

    # drive leftover artificials out of the basis, dropping redundant rows
    keep_rows = []
    for i in range(len(basis)):
        if basis[i] < n_struct:
            keep_rows.append(i)
            continue
        pivot_cols = np.nonzero(np.abs(T[i, :n_struct]) > _PIVOT_TOL)[0]
        if pivot_cols.size:
            _pivot(T, basis, i, int(pivot_cols[0]))
            keep_rows.append(i)
        # else: redundant row, drop it below
    rows = keep_rows + [T.shape[0] - 1]
    T = T[rows][:, list(range(n_struct)) + [-1]]
    basis = [basis[i] for i in keep_rows]

    # phase-2 objective over [xp, xn, slack]
    c2 = np.concatenate([c, -c, np.zeros(m)])
    T[-1, :] = 0.0
    T[-1, :n_struct] = c2
    for i, bcol in enumerate(basis):
        if np.abs(c2[bcol]) > 0:
            T[-1] -= c2[bcol] * T[i]
    status = _bland_step(T, basis, max_pivots)
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED, None, None)
    x = _extract(T, basis, n_struct, n)
    return LpResult(OPTIMAL, x, float(c @ x))


def _extract(T, basis, n_struct, n):
    vals = np.zeros(n_struct)
    for i, bcol in enumerate(basis):
        if bcol < n_struct:
            vals[bcol] = T[i, -1]
    return vals[:n] - vals[n:2 * n]
