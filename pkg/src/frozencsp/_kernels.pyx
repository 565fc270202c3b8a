# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled peeling and enumeration kernels (same contract as _fallback)."""
import numpy as np
cimport numpy as cnp

ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64
ctypedef cnp.int8_t i8
ctypedef cnp.uint8_t u8

cnp.import_array()


def peel_sequential(int n, const i32[:, ::1] edges, const i32[::1] essential,
                    const i64[::1] indptr, const i32[::1] inc):
    cdef Py_ssize_t E = edges.shape[0]
    cdef i64[::1] deg = np.zeros(n, dtype=np.int64)
    cdef u8[::1] edge_alive = np.ones(E, dtype=np.uint8)
    cdef i32[::1] gen = np.full(n, -1, dtype=np.int32)
    cdef i32[::1] queue = np.empty(n, dtype=np.int32)
    cdef Py_ssize_t head = 0, tail = 0, e, p
    cdef int v, u, g
    for e in range(E):
        deg[essential[e]] += 1
    for v in range(n):
        if deg[v] == 0:
            gen[v] = 0
            queue[tail] = v
            tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        g = gen[v] + 1
        for p in range(indptr[v], indptr[v + 1]):
            e = inc[p]
            if not edge_alive[e]:
                continue
            edge_alive[e] = 0
            u = essential[e]
            deg[u] -= 1
            if deg[u] == 0 and gen[u] < 0:
                gen[u] = g
                queue[tail] = u
                tail += 1
    return np.asarray(queue[:tail]).copy(), np.asarray(gen)


def parallel_rounds(int n, const i32[:, ::1] edges, const i32[::1] essential,
                    const i64[::1] indptr, const i32[::1] inc, const i8[::1] signs, long i_max):
    cdef Py_ssize_t E = edges.shape[0]
    cdef i64[::1] deg = np.zeros(n, dtype=np.int64)
    cdef u8[::1] edge_alive = np.ones(E, dtype=np.uint8)
    cdef i32[::1] death = np.full(n, -1, dtype=np.int32)
    cdef i32[::1] frontier = np.empty(n, dtype=np.int32)
    cdef i32[::1] nxt = np.empty(n, dtype=np.int32)
    cdef i32[::1] tmp
    cdef Py_ssize_t nf = 0, nn, e, p, j
    cdef int v, u, s
    cdef long i = 0
    cdef i64 X[2]
    cdef i64 Y[2]
    cdef i64 A[2]
    cdef i64 B[2]
    X[0] = X[1] = Y[0] = Y[1] = B[0] = B[1] = 0
    rows = []
    for e in range(E):
        deg[essential[e]] += 1
    for v in range(n):
        s = 1 if signs[v] > 0 else 0
        X[s] += 1
        if deg[v] == 1:
            B[s] += 1
        elif deg[v] == 0:
            frontier[nf] = v
            nf += 1
    for e in range(E):
        Y[1 if signs[essential[e]] > 0 else 0] += 1
    while i < i_max:
        A[0] = A[1] = 0
        for j in range(nf):
            A[1 if signs[frontier[j]] > 0 else 0] += 1
        rows.append((X[1], X[0], Y[1], Y[0], A[1], A[0], B[1], B[0]))
        if nf == 0:
            break
        for j in range(nf):
            v = frontier[j]
            death[v] = i
            X[1 if signs[v] > 0 else 0] -= 1
        nn = 0
        for j in range(nf):
            v = frontier[j]
            for p in range(indptr[v], indptr[v + 1]):
                e = inc[p]
                if not edge_alive[e]:
                    continue
                edge_alive[e] = 0
                u = essential[e]
                s = 1 if signs[u] > 0 else 0
                Y[s] -= 1
                deg[u] -= 1
                if deg[u] == 1:
                    B[s] += 1
                elif deg[u] == 0:
                    B[s] -= 1
                    if death[u] < 0:
                        nxt[nn] = u
                        nn += 1
        tmp = frontier
        frontier = nxt
        nxt = tmp
        nf = nn
        i += 1
    stats = np.array(rows, dtype=np.int64).reshape(-1, 8)
    return np.asarray(death), stats, np.asarray(edge_alive).astype(bool)


def enumerate_solutions(int n, const u8[:, ::1] tables, const i32[::1] members,
                        const i32[:, ::1] tuples):
    """Backtracking over variables 0..n-1; each clause is checked once its last variable is set."""
    cdef Py_ssize_t M = members.shape[0]
    cdef int k = tuples.shape[1] if M > 0 else 0
    cdef Py_ssize_t c, j
    cdef int v, t, last, idx
    cdef i64 mask
    # clauses bucketed by their largest variable
    last_of = np.full(M, -1, dtype=np.int64)
    for c in range(M):
        last = -1
        for j in range(k):
            if tuples[c, j] > last:
                last = tuples[c, j]
        last_of[c] = last
    order = np.argsort(last_of, kind="stable").astype(np.int32)
    cdef i32[::1] ord_ = order
    cdef i64[::1] start = np.searchsorted(last_of[order], np.arange(n + 1)).astype(np.int64)
    cdef i8[::1] val = np.full(max(n, 1), -1, dtype=np.int8)
    out = []
    cdef bint ok
    v = 0
    if n == 0:
        return np.zeros(1, dtype=np.int64)
    while v >= 0:
        val[v] += 1
        if val[v] > 1:
            val[v] = -1
            v -= 1
            continue
        ok = True
        for j in range(start[v], start[v + 1]):
            c = ord_[j]
            idx = 0
            for t in range(k):
                idx = (idx << 1) | val[tuples[c, t]]
            if not tables[members[c], idx]:
                ok = False
                break
        if not ok:
            continue
        if v == n - 1:
            mask = 0
            for t in range(n):
                if val[t]:
                    mask |= (<i64>1) << t
            out.append(mask)
        else:
            v += 1
    return np.array(sorted(out), dtype=np.int64)
