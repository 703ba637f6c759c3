"""Fourier-Motzkin projection of a polyhedron onto a linear functional.

The functional is adjoined as a new variable ``t`` through the pair of rows
``c x - t <= -offset`` and ``-c x + t <= offset``; every ``x`` variable is then
eliminated. Explicit equalities (a row together with its exact negation) are
removed by substitution, which never multiplies rows. Inequality eliminations
use the pairwise combination step with duplicate/dominated-row pruning and the
ancestor-count redundancy rule (a row produced after ``k`` pairwise
eliminations with more than ``k + 1`` original ancestors is implied).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .defaults import FME_MAX_ROWS, FME_MAX_VARIABLES
from .errors import BudgetExceeded

MAX_VARIABLES = FME_MAX_VARIABLES
MAX_ROWS = FME_MAX_ROWS
ZERO_TOL = 1e-12
FEAS_TOL = 1e-9
TIE_TOL = 1e-11


@dataclass(frozen=True, eq=False)
class FMEResult:
    status: str  # "bounded" | "infeasible" | "unbounded"
    lo: float
    hi: float
    x_lo: np.ndarray | None = None
    x_hi: np.ndarray | None = None
    eliminations: int = 0
    peak_rows: int = 0


def _popcount(anc):
    return np.bitwise_count(anc).sum(axis=1)


class _Rows:
    """Row store ``a @ z <= b``; ``anc`` holds ancestor bitmasks (uint64 words)."""

    def __init__(self, a, b, anc):
        self.a, self.b, self.anc = a, b, anc

    def take(self, keep):
        return _Rows(self.a[keep], self.b[keep], self.anc[keep])

    def normalize(self):
        scale = np.max(np.abs(self.a), axis=1)
        live = scale > ZERO_TOL
        self.a[live] /= scale[live, None]
        self.b[live] /= scale[live]
        self.a[~live] = 0.0

    def prune(self):
        """Drop duplicate directions, keeping the tightest right-hand side."""
        self.normalize()
        if len(self.b) == 0:
            return self
        _, group = np.unique(np.round(self.a, 11), axis=0, return_inverse=True)
        group = group.ravel()
        # among rows whose bounds tie up to round-off, keep the one with the
        # fewest ancestors so the ancestor rule stays applicable downstream
        best_b = np.full(group.max() + 1, np.inf)
        np.minimum.at(best_b, group, self.b)
        tied = self.b <= best_b[group] + TIE_TOL * np.maximum(1.0, np.abs(best_b[group]))
        cand = np.flatnonzero(tied)
        order = cand[np.lexsort((self.b[cand], _popcount(self.anc[cand]), group[cand]))]
        first = np.ones(order.size, dtype=bool)
        first[1:] = group[order][1:] != group[order][:-1]
        return self.take(np.sort(order[first]))


def _find_equality(rows, col):
    """A pair of rows ``r, -r`` with a nonzero entry in column ``col``."""
    nz = np.flatnonzero(np.abs(rows.a[:, col]) > ZERO_TOL)
    index = {}
    for k in nz:
        index.setdefault(np.round(rows.a[k], 11).tobytes(), []).append(k)
    for k in nz:
        for j in index.get(np.round(-rows.a[k], 11).tobytes(), ()):
            if abs(rows.b[k] + rows.b[j]) <= FEAS_TOL * max(1.0, abs(rows.b[k])):
                return k, j
    return None


def _substitute(rows, col, k, j):
    """Eliminate ``col`` using the equality formed by rows ``k`` and ``j``."""
    eq_a, eq_b = rows.a[k].copy(), rows.b[k]
    keep = np.ones(len(rows.b), dtype=bool)
    keep[[k, j]] = False
    rest = rows.take(keep)
    factor = rest.a[:, col] / eq_a[col]
    rest.a = rest.a - np.outer(factor, eq_a)
    rest.b = rest.b - factor * eq_b
    rest.a[:, col] = 0.0
    return rest, ("eq", col, eq_a, eq_b)


def _combine(rows, col, steps):
    """Pairwise elimination of ``col``; ``steps`` counts prior pairwise steps."""
    coef = rows.a[:, col]
    pos = np.flatnonzero(coef > ZERO_TOL)
    neg = np.flatnonzero(coef < -ZERO_TOL)
    zero = np.flatnonzero(np.abs(coef) <= ZERO_TOL)
    both = np.r_[pos, neg]
    record = ("fm", col, rows.a[both].copy(), rows.b[both].copy())
    out = rows.take(zero)
    if pos.size and neg.size:
        union = rows.anc[pos][:, None, :] | rows.anc[neg][None, :, :]
        ok = np.bitwise_count(union).sum(axis=2) <= steps + 2
        pi, ni = np.nonzero(ok)
        if pi.size + zero.size > MAX_ROWS:
            raise BudgetExceeded(f"elimination would create {pi.size + zero.size} rows")
        p, n = pos[pi], neg[ni]
        cp, cn = coef[p], -coef[n]
        comb = rows.a[p] / cp[:, None] + rows.a[n] / cn[:, None]
        comb[:, col] = 0.0
        out = _Rows(np.vstack([out.a, comb]),
                    np.concatenate([out.b, rows.b[p] / cp + rows.b[n] / cn]),
                    np.vstack([out.anc, union[pi, ni]]))
    return out, record


def _pick_column(rows, remaining):
    best, best_cost = None, None
    for col in remaining:
        c = rows.a[:, col]
        n_p = int(np.sum(c > ZERO_TOL))
        n_n = int(np.sum(c < -ZERO_TOL))
        cost = n_p * n_n - n_p - n_n
        if best_cost is None or cost < best_cost:
            best, best_cost = col, cost
    return best


def _back_substitute(records, z):
    """Recover the eliminated coordinates of ``z`` in reverse order."""
    for kind, col, a, b in reversed(records):
        if kind == "eq":
            rest = a @ z - a[col] * z[col]
            z[col] = (b - rest) / a[col]
            continue
        lo, hi = -np.inf, np.inf
        for row, rhs in zip(a, b):
            val = (rhs - (row @ z - row[col] * z[col])) / row[col]
            if row[col] > 0:
                hi = min(hi, val)
            else:
                lo = max(lo, val)
        z[col] = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)
    return z


def project(a_ub, b_ub, c, offset=0.0, max_variables=MAX_VARIABLES):
    """Interval ``[min, max]`` of ``c @ x + offset`` over ``{x : a_ub x <= b_ub}``."""
    a = np.atleast_2d(np.asarray(a_ub, dtype=float))
    b = np.asarray(b_ub, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    m, n = a.shape
    if n > max_variables:
        raise BudgetExceeded(f"{n} variables exceed the elimination budget of {max_variables}")
    if b.size != m or c.size != n:
        raise ValueError("dimension mismatch between c, A and b")

    # columns 0..n-1 are x, column n is t
    full = np.zeros((m + 2, n + 1))
    full[:m, :n] = a
    full[m, :n], full[m, n] = c, -1.0
    full[m + 1, :n], full[m + 1, n] = -c, 1.0
    rhs = np.concatenate([b, [-offset, offset]])
    words = (m + 2 + 63) // 64
    anc = np.zeros((m + 2, words), dtype=np.uint64)
    for k in range(m + 2):
        anc[k, k // 64] = np.uint64(1) << np.uint64(k % 64)
    rows = _Rows(full, rhs, anc).prune()

    records = []
    remaining = list(range(n))
    steps = 0
    peak = len(rows.b)
    while remaining:
        sub = None
        # substitution only before pairwise steps keeps the ancestor rule valid
        for col in (remaining if steps == 0 else ()):
            pair = _find_equality(rows, col)
            if pair is not None:
                sub = col, pair
                break
        if sub is not None:
            col, (k, j) = sub
            rows, rec = _substitute(rows, col, k, j)
        else:
            col = _pick_column(rows, remaining)
            rows, rec = _combine(rows, col, steps)
            steps += 1
        records.append(rec)
        remaining.remove(col)
        rows = rows.prune()
        peak = max(peak, len(rows.b))

    coef = rows.a[:, n]
    const = np.abs(coef) <= ZERO_TOL
    if np.any(rows.b[const] < -FEAS_TOL):
        return FMEResult("infeasible", np.nan, np.nan, eliminations=len(records), peak_rows=peak)
    up = coef > ZERO_TOL
    dn = coef < -ZERO_TOL
    hi = np.min(rows.b[up] / coef[up]) if np.any(up) else np.inf
    lo = np.max(rows.b[dn] / coef[dn]) if np.any(dn) else -np.inf
    if lo > hi + FEAS_TOL * max(1.0, abs(hi)):
        return FMEResult("infeasible", np.nan, np.nan, eliminations=len(records), peak_rows=peak)

    def certificate(t):
        if not np.isfinite(t):
            return None
        z = np.zeros(n + 1)
        z[n] = t
        return _back_substitute(records, z)[:n]

    status = "bounded" if np.isfinite(lo) and np.isfinite(hi) else "unbounded"
    return FMEResult(status, float(lo), float(hi), certificate(lo), certificate(hi),
                     len(records), peak)
