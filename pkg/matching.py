"""Minimum-cost assignment of slots (rows) to distinct users (columns).

Rectangular Hungarian method on potentials (m ≤ n, every row matched, columns
at most once), then a refinement pass that moves to the lexicographically
smallest slot→user vector among all minimum-cost assignments.
"""
from __future__ import annotations

import logging
from collections import deque
from typing import NamedTuple

import numpy as np

from errors import DomainError, InfeasibleError

log = logging.getLogger(__name__)

# int64 is safe while potentials stay far below 2^62; larger costs use Python ints.
_INT64_SAFE = 2 ** 40


class Assignment(NamedTuple):
    slots: tuple[int, ...]    # user index per slot
    total: int


def as_cost_matrix(costs) -> np.ndarray:
    if isinstance(costs, np.ndarray) and costs.dtype.kind in "iu" and costs.ndim == 2:
        if costs.size and costs.min() < 0:
            raise DomainError("costs must be non-negative")
        if not costs.size or costs.max() < _INT64_SAFE:
            return costs.astype(np.int64, copy=False)
    arr = np.asarray(costs, dtype=object)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    if arr.ndim != 2:
        raise DomainError("cost matrix must be two-dimensional")
    if arr.size:
        if any(not isinstance(x, (int, np.integer)) or isinstance(x, bool) for x in arr.flat):
            raise DomainError("costs must be integers")
        if min(int(x) for x in arr.flat) < 0:
            raise DomainError("costs must be non-negative")
        if max(int(x) for x in arr.flat) < _INT64_SAFE:
            return arr.astype(np.int64)
    return np.vectorize(int, otypes=[object])(arr) if arr.size else arr.astype(np.int64)


def _hungarian(cost: np.ndarray):
    m, n = cost.shape
    dtype = cost.dtype
    inf = (2 ** 62) if dtype == np.int64 else int(cost.sum()) * 4 + 1
    u = np.zeros(m + 1, dtype=dtype)
    v = np.zeros(n + 1, dtype=dtype)
    p = np.zeros(n + 1, dtype=np.int64)      # p[j]: 1-based row matched to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, m + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf, dtype=dtype)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            hit = np.flatnonzero(used)
            u[p[hit]] += delta
            v[hit] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of = [0] * m
    for j in range(1, n + 1):
        if p[j]:
            col_of[p[j] - 1] = j - 1
    return col_of, u[1:], v[1:]


def _lexmin(cost, u, v, col_of):
    """Greedy per slot: smallest user that some optimal completion allows.

    Optimal assignments are exactly the row-saturating matchings on tight
    edges (c - u - v = 0) that cover every column with v < 0. Columns with
    v = 0 may stay free; they are modelled as n - m interchangeable dummy
    rows so that every optimum is a perfect matching.
    """
    m, n = cost.shape
    tight = (cost - u[:, None] - v[None, :]) == 0
    free_ok = np.flatnonzero(v == 0).tolist()
    owner = [-1] * n                 # -1: held by a dummy row (uncovered)
    for i, j in enumerate(col_of):
        owner[j] = i
    adjacency = [np.flatnonzero(tight[i]).tolist() for i in range(m)]

    def augment(start_row, target, fixed):
        # BFS from an exposed row to the exposed column ``target``.
        parent_col = {}              # column -> row that reached it
        parent_row = {start_row: None}
        queue = deque([start_row])
        dummy_done = False
        while queue:
            row = queue.popleft()
            if row == -1:
                if dummy_done:
                    continue
                dummy_done = True
                nbrs = free_ok
            else:
                nbrs = adjacency[row]
            for c in nbrs:
                if c in parent_col:
                    continue
                holder = owner[c]
                if c != target and 0 <= holder <= fixed:
                    continue
                parent_col[c] = row
                if c == target:
                    return parent_col, parent_row, c
                if holder == -1 and not dummy_done and -1 not in parent_row:
                    parent_row[-1] = c
                    queue.append(-1)
                elif holder >= 0 and holder not in parent_row:
                    parent_row[holder] = c
                    queue.append(holder)
        return None

    for i in range(m):
        current = col_of[i]
        for j in adjacency[i]:
            if j >= current:
                break
            holder = owner[j]
            if 0 <= holder < i:
                continue
            c0 = current
            owner[j], col_of[i], owner[c0] = i, j, -2
            found = augment(holder, c0, i)
            if found is None:
                owner[j], col_of[i], owner[c0] = holder, c0, i
                continue
            parent_col, parent_row, c = found
            # walk back: each row on the path takes the column that reached it
            while True:
                row = parent_col[c]
                prev = parent_row[row]
                owner[c] = row
                if row >= 0:
                    col_of[row] = c
                if prev is None:
                    break
                c = prev
            break
    return col_of


def min_cost_assignment(costs) -> Assignment:
    """Injective slot→user map of minimum total cost.

    Users left unmatched implicitly take the empty subset at cost 0. Ties are
    broken towards the lexicographically smallest user vector.
    """
    cost = as_cost_matrix(costs)
    m, n = cost.shape
    if m > n:
        raise InfeasibleError(f"{m} slots cannot be matched to {n} users")
    if m == 0:
        return Assignment((), 0)
    col_of, u, v = _hungarian(cost)
    col_of = _lexmin(cost, u, v, col_of)
    total = sum(int(cost[i, j]) for i, j in enumerate(col_of))
    return Assignment(tuple(int(j) for j in col_of), total)
