"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Solves  max/min c.x  s.t.  A_eq x = b_eq,  A_ge x >= b_ge,  x >= 0.

Written for correctness at small scale (a few hundred variables): a dense
tableau, artificial variables for phase 1, surplus columns for inequalities,
and smallest-index pivoting throughout, which guarantees termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SimplexResult", "solve_lp"]

_PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-8


@dataclass(frozen=True)
class SimplexResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float | None
    basis: np.ndarray | None


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    basis[row] = col
    # Keep the rhs exactly nonnegative: highly degenerate bases otherwise
    # accumulate roundoff-negative entries whose "zero" ratios stop being
    # exact ties, which defeats the anti-cycling rule.
    rhs = tableau[:-1, -1]
    noise = np.abs(rhs) <= 1e-11
    rhs[noise] = 0.0
    drifted = rhs < 0
    if np.any(drifted):
        if np.min(rhs) < -1e-7:
            raise RuntimeError(f"tableau lost primal feasibility ({np.min(rhs):.3e})")
        rhs[drifted] = 0.0


def _bland_entering(obj_row: np.ndarray, limit: int) -> int | None:
    for j in range(limit):
        if obj_row[j] < -_PIVOT_TOL:
            return j
    return None


def _dantzig_entering(obj_row: np.ndarray, limit: int) -> int | None:
    j = int(np.argmin(obj_row[:limit]))
    return j if obj_row[j] < -_PIVOT_TOL else None


def _bland_leaving(tableau: np.ndarray, basis: np.ndarray, col: int) -> int | None:
    a = tableau[:-1, col]
    rhs = tableau[:-1, -1]
    eligible = a > _PIVOT_TOL
    if not np.any(eligible):
        return None
    ratios = np.full(a.shape, np.inf)
    ratios[eligible] = rhs[eligible] / a[eligible]
    best = ratios.min()
    # Degenerate ties are exact zeros (the rhs is kept exactly nonnegative),
    # so the smallest-basis-index tie-break sees the true tie set.
    tied = np.flatnonzero(ratios <= best + 1e-12 + 1e-9 * best)
    return int(tied[np.argmin(basis[tied])])


# Consecutive non-improving pivots tolerated before Bland's rule takes over.
_STALL_LIMIT = 64


def _run(tableau: np.ndarray, basis: np.ndarray, n_cols: int) -> str:
    """Iterate to optimality: Dantzig pricing, Bland's rule through stalls.

    Steepest reduced cost keeps the pivot count (and hence float drift) low;
    once a degenerate vertex stops yielding objective progress the entering
    rule switches to smallest-index, whose anti-cycling guarantee ensures the
    vertex is eventually left, after which pricing reverts.
    """
    max_pivots = 500 * (tableau.shape[0] + n_cols) + 10_000
    last_obj = -tableau[-1, -1]
    stall = 0
    bland = False
    for _ in range(max_pivots):
        pick = _bland_entering if bland else _dantzig_entering
        col = pick(tableau[-1], n_cols)
        if col is None:
            return "optimal"
        row = _bland_leaving(tableau, basis, col)
        if row is None:
            return "unbounded"
        _pivot(tableau, basis, row, col)
        obj = -tableau[-1, -1]
        if obj < last_obj - 1e-12:
            last_obj = obj
            stall = 0
            bland = False
        else:
            stall += 1
            if stall >= _STALL_LIMIT:
                bland = True
    raise RuntimeError("simplex exceeded its pivot budget")


def solve_lp(
    c,
    a_eq=None,
    b_eq=None,
    a_ge=None,
    b_ge=None,
    maximize: bool = False,
) -> SimplexResult:
    """Solve the LP and return an optimal basic solution when one exists."""
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    blocks, rhs_parts = [], []
    n_ge = 0
    if a_eq is not None and len(a_eq):
        a_eq = np.asarray(a_eq, dtype=np.float64)
        blocks.append(a_eq)
        rhs_parts.append(np.asarray(b_eq, dtype=np.float64))
    if a_ge is not None and len(a_ge):
        a_ge = np.asarray(a_ge, dtype=np.float64)
        n_ge = a_ge.shape[0]
        blocks.append(a_ge)
        rhs_parts.append(np.asarray(b_ge, dtype=np.float64))
    if not blocks:
        raise ValueError("LP needs at least one constraint row")
    a = np.vstack(blocks)
    b = np.concatenate(rhs_parts)
    m = a.shape[0]

    # Surplus columns turn the >= rows (stacked last) into equalities.
    surplus = np.zeros((m, n_ge))
    if n_ge:
        surplus[m - n_ge :, :] = -np.eye(n_ge)
    a = np.hstack([a, surplus])
    n_struct = n + n_ge

    neg = b < 0
    a[neg] *= -1.0
    b = np.where(neg, -b, b)

    # Phase 1: artificial basis, minimize the artificial mass.
    tableau = np.zeros((m + 1, n_struct + m + 1))
    tableau[:m, :n_struct] = a
    tableau[:m, n_struct : n_struct + m] = np.eye(m)
    tableau[:m, -1] = b
    basis = np.arange(n_struct, n_struct + m)
    tableau[-1, n_struct : n_struct + m] = 1.0
    tableau[-1] -= tableau[:m].sum(axis=0)

    status = _run(tableau, basis, n_struct + m)
    if status == "unbounded":  # impossible: phase-1 objective is bounded below by 0
        raise AssertionError("phase 1 reported unbounded")
    if -tableau[-1, -1] > _FEAS_TOL:
        return SimplexResult("infeasible", None, None, None)

    # Drive leftover artificials out of the basis; drop redundant rows.
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n_struct:
            pivot_col = None
            for j in range(n_struct):
                if abs(tableau[i, j]) > _PIVOT_TOL:
                    pivot_col = j
                    break
            if pivot_col is None:
                keep[i] = False
            else:
                _pivot(tableau, basis, i, pivot_col)

    rows = np.flatnonzero(keep)
    work = np.zeros((rows.size + 1, n_struct + 1))
    work[:-1, :n_struct] = tableau[rows, :n_struct]
    work[:-1, -1] = tableau[rows, -1]
    basis = basis[rows]

    # Phase 2: reduce the true objective against the current basis.
    c_full = np.zeros(n_struct)
    c_full[:n] = -c if maximize else c
    work[-1, :n_struct] = c_full
    for i, var in enumerate(basis):
        coef = work[-1, var]
        if coef != 0.0:
            work[-1] -= coef * work[i]

    status = _run(work, basis, n_struct)
    if status == "unbounded":
        return SimplexResult("unbounded", None, None, None)

    x = np.zeros(n_struct)
    x[basis] = work[:-1, -1]
    x = x[:n]
    return SimplexResult("optimal", x, float(c @ x), basis.copy())
