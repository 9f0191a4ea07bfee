"""Linear assignment (Kuhn-Munkres with potentials).

:func:`hungarian` returns a maximum-cardinality matching of minimal total
cost. Among equally cheap matchings it returns the lexicographically smallest
one, comparing the row-sorted ``(row, col)`` pair lists, so results never
depend on solver internals.
"""

from __future__ import annotations

import numpy as np


def _solve_square(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Min-cost perfect matching of a square matrix.

    Returns ``(col_of_row, u, v)`` where ``u``/``v`` are optimal dual
    potentials: ``a[i, j] - u[i] - v[j] >= 0`` with equality on the matching.
    """
    n = a.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free[1:] & (cur < minv[1:])
            minv[1:] = np.where(better, cur, minv[1:])
            way[1:] = np.where(better, j0, way[1:])
            cand = np.where(free[1:], minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row, u[1:], v[1:]


def hungarian(cost) -> list[tuple[int, int]]:
    """Optimal assignment for an ``m x n`` cost matrix.

    Every row is assigned when ``m <= n``, every column otherwise. Returns
    ``(row, col)`` pairs sorted by row.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return []
    if cost.ndim != 2:
        raise ValueError("cost matrix must be two-dimensional")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    m, n = cost.shape
    size = max(m, n)
    padded = np.zeros((size, size))
    padded[:m, :n] = cost
    tol = 1e-9 * max(1.0, float(np.abs(cost).max())) * size

    rows = list(range(size))
    cols = list(range(size))
    col_of_row, u, v = _solve_square(padded)
    opt = float(padded[np.arange(size), col_of_row].sum())
    choice: dict[int, int] = {}

    for i in range(m):
        k = rows.index(i)
        cur = cols[col_of_row[k]]
        reduced = padded[i, cols] - u[k] - v
        tight_real = [cols[j] for j in range(len(cols)) if cols[j] < n and reduced[j] <= tol]
        if cur < n:
            candidates = [c for c in tight_real if c < cur]
        else:
            candidates = tight_real
        adopted = False
        for c in sorted(candidates):
            sub_rows = [r for r in rows if r != i]
            sub_cols = [cc for cc in cols if cc != c]
            sub = padded[np.ix_(sub_rows, sub_cols)]
            s_col, s_u, s_v = _solve_square(sub)
            total = float(sub[np.arange(len(sub_rows)), s_col].sum()) + padded[i, c]
            if total <= opt + tol:
                choice[i] = c
                opt = total - padded[i, c]
                rows, cols = sub_rows, sub_cols
                col_of_row, u, v = s_col, s_u, s_v
                adopted = True
                break
        if not adopted:
            choice[i] = cur
            opt -= padded[i, cur]
            keep_rows = [r for r in range(len(rows)) if r != k]
            j = int(col_of_row[k])
            keep_cols = [c for c in range(len(cols)) if c != j]
            remap = {old: new for new, old in enumerate(keep_cols)}
            col_of_row = np.array([remap[int(col_of_row[r])] for r in keep_rows], dtype=np.int64)
            u = u[keep_rows]
            v = v[keep_cols]
            rows = [rows[r] for r in keep_rows]
            cols = [cols[c] for c in keep_cols]
    return [(i, c) for i, c in sorted(choice.items()) if c < n]


def assignment_cost(cost, pairs) -> float:
    cost = np.asarray(cost, dtype=float)
    total = 0.0
    for r, c in sorted(pairs):
        total += float(cost[r, c])
    return total
