"""Pure-Python/numpy versions of the hot kernels.

Signatures and outputs match the compiled module exactly; the backend
selector in ``_backend`` picks one at import time.
"""
from __future__ import annotations

from collections import deque

import numpy as np

STAT_COLUMNS = ("X_plus", "X_minus", "Y_plus", "Y_minus", "A_plus", "A_minus", "B_plus", "B_minus")


def _essential_degree(n, essential, alive_edges=None):
    deg = np.bincount(essential, minlength=n).astype(np.int64) if len(essential) else np.zeros(n, np.int64)
    return deg


def peel_sequential(n, edges, essential, indptr, inc):
    """FIFO peeling.  Returns (removal order, generation per vertex, -1 for core)."""
    E = edges.shape[0]
    deg = _essential_degree(n, essential).tolist()
    edge_alive = [True] * E
    gen = [-1] * n
    ess = essential.tolist()
    indptr = indptr.tolist()
    inc = inc.tolist()
    queue = deque()
    for v in range(n):
        if deg[v] == 0:
            gen[v] = 0
            queue.append(v)
    order = []
    while queue:
        v = queue.popleft()
        order.append(v)
        g = gen[v] + 1
        for p in range(indptr[v], indptr[v + 1]):
            e = inc[p]
            if not edge_alive[e]:
                continue
            edge_alive[e] = False
            u = ess[e]
            deg[u] -= 1
            if deg[u] == 0 and gen[u] < 0:
                gen[u] = g
                queue.append(u)
    return np.array(order, dtype=np.int32), np.array(gen, dtype=np.int32)


def parallel_rounds(n, edges, essential, indptr, inc, signs, i_max):
    """Synchronous peeling rounds with per-round statistics.

    Returns (death round per vertex, -1 for survivors; stats array with one
    row per recorded round and columns STAT_COLUMNS; surviving edge mask).
    """
    E = edges.shape[0]
    deg = _essential_degree(n, essential).tolist()
    ess = essential.tolist()
    sg = [1 if s > 0 else 0 for s in signs.tolist()]  # 1 -> Lambda+
    indptr = indptr.tolist()
    inc = inc.tolist()
    edge_alive = [True] * E
    death = [-1] * n
    X = [0, 0]
    Y = [0, 0]
    B = [0, 0]
    for v in range(n):
        X[sg[v]] += 1
        if deg[v] == 1:
            B[sg[v]] += 1
    for e in range(E):
        Y[sg[ess[e]]] += 1
    frontier = [v for v in range(n) if deg[v] == 0]
    rows = []
    i = 0
    while i < i_max:
        A = [0, 0]
        for v in frontier:
            A[sg[v]] += 1
        rows.append((X[1], X[0], Y[1], Y[0], A[1], A[0], B[1], B[0]))
        if not frontier:
            break
        for v in frontier:
            death[v] = i
            X[sg[v]] -= 1
        nxt = []
        for v in frontier:
            for p in range(indptr[v], indptr[v + 1]):
                e = inc[p]
                if not edge_alive[e]:
                    continue
                edge_alive[e] = False
                u = ess[e]
                Y[sg[u]] -= 1
                deg[u] -= 1
                if deg[u] == 1:
                    B[sg[u]] += 1
                elif deg[u] == 0:
                    B[sg[u]] -= 1
                    if death[u] < 0:
                        nxt.append(u)
        frontier = nxt
        i += 1
    return (np.array(death, dtype=np.int32), np.array(rows, dtype=np.int64).reshape(-1, 8),
            np.array(edge_alive, dtype=bool))


def enumerate_solutions(n, tables, members, tuples):
    """All satisfying assignments as int64 bitmasks (bit v set means x_v = +1)."""
    k = tuples.shape[1] if tuples.ndim == 2 else 0
    total = 1 << n
    chunk = 1 << min(n, 16)
    out = []
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        X = np.arange(start, min(start + chunk, total), dtype=np.int64)
        ok = np.ones(X.size, dtype=bool)
        for c in range(members.shape[0]):
            bits = (X[:, None] >> tuples[c].astype(np.int64)[None, :]) & 1
            idx = (bits << shifts[None, :]).sum(axis=1)
            ok &= tables[members[c]][idx].astype(bool)
            if not ok.any():
                break
        out.append(X[ok])
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
