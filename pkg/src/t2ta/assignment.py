"""Rectangular linear assignment (Hungarian method with row potentials)."""
from __future__ import annotations

import math

import numpy as np


def hungarian(cost) -> np.ndarray:
    """Minimum-cost matching of min(rows, cols) pairs.

    Returns an int array ``col`` of length n_rows where ``col[i]`` is the
    column assigned to row i, or -1 if row i is unassigned. Entries must be
    finite; encode forbidden pairs with a large finite penalty.
    """
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2:
        raise ValueError("cost matrix must be two-dimensional")
    n_rows, n_cols = C.shape
    out = np.full(n_rows, -1, dtype=int)
    if C.size == 0:
        return out
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    transposed = n_rows > n_cols
    if transposed:
        C = C.T
    n, m = C.shape
    rows = C.tolist()

    # shortest augmenting path, 1-based with a virtual column 0
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    for j in range(1, m + 1):
        if p[j]:
            r, c = p[j] - 1, j - 1
            if transposed:
                out[c] = r
            else:
                out[r] = c
    return out


def assignment_cost(cost, col: np.ndarray) -> float:
    C = np.asarray(cost, dtype=float)
    return float(sum(C[i, j] for i, j in enumerate(col) if j >= 0))
