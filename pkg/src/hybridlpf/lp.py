"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves ``min/max c @ x  s.t.  A x <= b`` over free variables. Each free
variable is split into a difference of two nonnegative ones; rows with a
negative right-hand side get an artificial variable for phase one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .defaults import LP_FEAS_TOL as FEAS_TOL
from .defaults import LP_PIVOT_TOL as PIVOT_TOL


@dataclass(frozen=True, eq=False)
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    value: float | None
    ray: np.ndarray | None = None
    pivots: int = 0


def _pivot(t, row, col):
    t[row] /= t[row, col]
    others = np.abs(t[:, col]) > 0
    others[row] = False
    t[others] -= np.outer(t[others, col], t[row])


def _run(t, basis, cost, allowed, max_pivots):
    """Minimize over the tableau ``t`` (last column rhs) with reduced-cost row ``cost``.

    Returns ("optimal" | "unbounded", entering column or None, pivots).
    """
    m = t.shape[0] - 1
    pivots = 0
    while True:
        red = t[m, :-1]
        cand = np.flatnonzero((red < -PIVOT_TOL) & allowed)
        if cand.size == 0:
            return "optimal", None, pivots
        col = cand[0]
        column = t[:m, col]
        pos = np.flatnonzero(column > PIVOT_TOL)
        if pos.size == 0:
            return "unbounded", col, pivots
        ratios = t[pos, -1] / column[pos]
        best = ratios.min()
        ties = pos[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        row = ties[np.argmin([basis[r] for r in ties])]
        _pivot(t, row, col)
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("simplex pivot limit reached")


def solve_lp(c, a_ub, b_ub, maximize=False, max_pivots=100_000):
    """Optimize a linear objective over ``{x : a_ub x <= b_ub}``."""
    a = np.atleast_2d(np.asarray(a_ub, dtype=float))
    b = np.asarray(b_ub, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    m, n = a.shape
    if b.size != m or c.size != n:
        raise ValueError("dimension mismatch between c, A and b")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
        raise ValueError("LP data must be finite")
    sign = -1.0 if maximize else 1.0

    neg = b < 0
    n_art = int(neg.sum())
    width = 2 * n + m + n_art
    t = np.zeros((m + 1, width + 1))
    t[:m, :n] = a
    t[:m, n:2 * n] = -a
    t[:m, 2 * n:2 * n + m] = np.eye(m)
    t[:m, -1] = b
    t[:m][neg] *= -1.0
    basis = np.empty(m, dtype=int)
    art_rows = np.flatnonzero(neg)
    for k, r in enumerate(art_rows):
        t[r, 2 * n + m + k] = 1.0
        basis[r] = 2 * n + m + k
    for r in np.flatnonzero(~neg):
        basis[r] = 2 * n + r

    allowed = np.ones(width, dtype=bool)
    pivots = 0
    if n_art:
        # phase one: minimize the sum of artificials
        t[m, :] = 0.0
        t[m, 2 * n + m:width] = 1.0
        for r in art_rows:
            t[m] -= t[r]
        _, _, pivots = _run(t, basis, None, allowed, max_pivots)
        if -t[m, -1] > FEAS_TOL * max(1.0, np.abs(b).max()):
            return LPResult("infeasible", None, None, pivots=pivots)
        art = np.arange(2 * n + m, width)
        for r in range(m):
            if basis[r] >= 2 * n + m:
                nz = np.flatnonzero(np.abs(t[r, :2 * n + m]) > PIVOT_TOL)
                if nz.size:
                    _pivot(t, r, nz[0])
                    basis[r] = nz[0]
        allowed[art] = False

    # phase two
    cost = np.zeros(width)
    cost[:n] = sign * c
    cost[n:2 * n] = -sign * c
    t[m, :] = 0.0
    t[m, :width] = cost
    for r in range(m):
        if cost[basis[r]] != 0:
            t[m] -= cost[basis[r]] * t[r]
    status, col, more = _run(t, basis, cost, allowed, max_pivots)
    pivots += more

    z = np.zeros(width)
    for r in range(m):
        z[basis[r]] = t[r, -1]
    x = z[:n] - z[n:2 * n]
    if status == "unbounded":
        d = np.zeros(width)
        d[col] = 1.0
        for r in range(m):
            d[basis[r]] = -t[r, col]
        ray = d[:n] - d[n:2 * n]
        return LPResult("unbounded", x, None, ray=ray, pivots=pivots)
    return LPResult("optimal", x, float(c @ x), pivots=pivots)
