"""Essential hypergraph Gamma(F, sigma) and its *-core.

Vertices are the n variables (0-based); each hyperedge is a constraint that
has an essential variable under sigma, with that vertex distinguished.  A
vertex is peeled when it is essential in no surviving edge, and peeling it
deletes every edge that contains it.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._backend import kernels
from .errors import CheckFailure, ContractError, InputError

STAT_COLUMNS = ("X_plus", "X_minus", "Y_plus", "Y_minus", "A_plus", "A_minus", "B_plus", "B_minus")
EXACT_DEPTH_LIMIT = 4096


def _csr(n: int, rows: np.ndarray, cols: np.ndarray):
    """indptr/indices listing ``cols`` grouped by ``rows``."""
    order = np.argsort(rows, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, np.ascontiguousarray(cols[order], dtype=np.int32)


@dataclass(frozen=True, eq=False)
class EssentialHypergraph:
    n_vertices: int
    signs: np.ndarray      # int8, +1 for Lambda+, -1 for Lambda-
    edges: np.ndarray      # int32 (E, k) vertex ids
    essential: np.ndarray  # int32 (E,) id of the essential vertex
    source: np.ndarray     # int32 (E,) originating constraint, -1 if drawn directly

    def __post_init__(self):
        n = int(self.n_vertices)
        signs = np.ascontiguousarray(self.signs, dtype=np.int8)
        edges = np.ascontiguousarray(self.edges, dtype=np.int32)
        if edges.ndim != 2:
            edges = edges.reshape(0, 0) if edges.size == 0 else edges
        essential = np.ascontiguousarray(self.essential, dtype=np.int32)
        source = np.ascontiguousarray(self.source, dtype=np.int32)
        if signs.shape != (n,) or not np.all(np.abs(signs) == 1):
            raise InputError("signs must be a length-n vector of +-1")
        if essential.shape != (edges.shape[0],) or source.shape != essential.shape:
            raise InputError("one essential vertex and one source per edge")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise InputError("edge vertex out of range")
        for name, arr in (("n_vertices", n), ("signs", signs), ("edges", edges),
                          ("essential", essential), ("source", source)):
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, n: int, signs, k: int = 0) -> "EssentialHypergraph":
        z = np.zeros(0, dtype=np.int32)
        return cls(n, signs, np.zeros((0, k), dtype=np.int32), z, z)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def k(self) -> int:
        return int(self.edges.shape[1])

    @cached_property
    def types(self) -> np.ndarray:
        """(E, 3) rows (s, a, b): essential sign and non-essential counts in Lambda+/-."""
        if self.n_edges == 0:
            return np.zeros((0, 3), dtype=np.int64)
        s = self.signs[self.essential].astype(np.int64)
        plus = (self.signs[self.edges] > 0).sum(axis=1)
        a = plus - (s > 0)
        return np.stack([s, a, self.k - 1 - a], axis=1)

    @cached_property
    def incidence(self):
        """CSR (indptr, edge ids) of the edges containing each vertex."""
        E, k = self.edges.shape
        rows = self.edges.ravel().astype(np.int64)
        cols = np.repeat(np.arange(E, dtype=np.int32), k)
        return _csr(self.n_vertices, rows, cols)

    def edges_of(self, v: int) -> np.ndarray:
        indptr, inc = self.incidence
        return inc[indptr[v]:indptr[v + 1]]

    def check(self) -> None:
        """Raise CheckFailure unless every stated invariant holds."""
        if self.n_edges == 0:
            return
        srt = np.sort(self.edges, axis=1)
        if np.any(srt[:, 1:] == srt[:, :-1]):
            raise CheckFailure("edge with a repeated vertex")
        if not np.all((self.edges == self.essential[:, None]).sum(axis=1) == 1):
            raise CheckFailure("essential vertex must occur exactly once in its edge")
        t = self.types
        if np.any(t[:, 1] < 0) or np.any(t[:, 2] < 0) or np.any(t[:, 1] + t[:, 2] != self.k - 1):
            raise CheckFailure("type counts inconsistent with vertex signs")


def build_gamma(F, sigma, m) -> EssentialHypergraph:
    """Gamma(F, sigma): one hyperedge per constraint that has an essential variable."""
    m.require("one_essential")
    sigma = np.asarray(sigma, dtype=np.int8)
    if sigma.shape != (F.n,):
        raise InputError(f"sigma must have length {F.n}")
    if F.M == 0:
        return EssentialHypergraph.empty(F.n, sigma, m.arity)
    idx = F.local_indices(sigma)
    ess_tab = m.essential_tables
    pos = ess_tab[F.members, idx]
    if np.any(pos == -2):
        bad = int(np.flatnonzero(pos == -2)[0])
        raise ContractError(f"sigma violates constraint {bad}")
    keep = np.flatnonzero(pos >= 0)
    tuples = F.tuples[keep]
    essential = tuples[np.arange(keep.size), pos[keep]]
    return EssentialHypergraph(F.n, sigma, tuples, essential, keep.astype(np.int32))


# -- peeling -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StarCore:
    gamma: EssentialHypergraph
    vertex_mask: np.ndarray
    edge_mask: np.ndarray

    @cached_property
    def vertices(self) -> np.ndarray:
        return np.flatnonzero(self.vertex_mask)

    @cached_property
    def edge_ids(self) -> np.ndarray:
        return np.flatnonzero(self.edge_mask)

    @cached_property
    def essential_degree(self) -> np.ndarray:
        g = self.gamma
        return np.bincount(g.essential[self.edge_mask], minlength=g.n_vertices)

    @cached_property
    def h1_edge(self) -> np.ndarray:
        """For x in H1 the id of e(x), its unique surviving essential edge; -1 elsewhere."""
        out = np.full(self.gamma.n_vertices, -1, dtype=np.int64)
        ids = self.edge_ids
        ess = self.gamma.essential[ids]
        single = self.essential_degree[ess] == 1
        out[ess[single]] = ids[single]
        return out

    @cached_property
    def h1(self) -> np.ndarray:
        return np.flatnonzero(self.vertex_mask & (self.essential_degree == 1))

    @property
    def h1_plus(self) -> np.ndarray:
        return self.h1[self.gamma.signs[self.h1] > 0]

    @property
    def h1_minus(self) -> np.ndarray:
        return self.h1[self.gamma.signs[self.h1] < 0]

    def e(self, x: int) -> np.ndarray:
        """Vertices of e(x) for x in H1."""
        eid = self.h1_edge[x]
        if eid < 0:
            raise InputError(f"vertex {x} is not in H1")
        return self.gamma.edges[eid]

    def essential_edges_of(self, x: int) -> np.ndarray:
        g = self.gamma
        ids = g.edges_of(x)
        ids = ids[self.edge_mask[ids]]
        return ids[g.essential[ids] == x]

    def stats(self) -> dict:
        g = self.gamma
        sv = g.signs[self.vertices]
        se = g.signs[g.essential[self.edge_ids]]
        return {"X_plus": int((sv > 0).sum()), "X_minus": int((sv < 0).sum()),
                "Y_plus": int((se > 0).sum()), "Y_minus": int((se < 0).sum()),
                "B_plus": int(self.h1_plus.size), "B_minus": int(self.h1_minus.size)}

    def check(self) -> None:
        g = self.gamma
        if np.any(self.vertex_mask & (self.essential_degree == 0)):
            raise CheckFailure("core vertex essential in no surviving edge")
        if self.edge_ids.size and not np.all(self.vertex_mask[g.edges[self.edge_ids]]):
            raise CheckFailure("surviving edge with a removed vertex")


@dataclass(frozen=True, eq=False)
class PeelTrace:
    removal_order: np.ndarray   # vertex ids in removal order
    removal_round: np.ndarray   # parallel round in which each vertex dies, -1 for core
    round_stats: np.ndarray | None  # (rounds + 1, 8) per STAT_COLUMNS, parallel runs only

    @property
    def star_depth(self) -> np.ndarray:
        """Round index as depth surrogate; inf for core vertices."""
        d = self.removal_round.astype(float)
        d[self.removal_round < 0] = math.inf
        return d

    @property
    def rounds(self) -> int:
        return int(self.removal_round.max()) + 1 if self.removal_round.size else 0

    def stat(self, name: str) -> np.ndarray:
        return self.round_stats[:, STAT_COLUMNS.index(name)]


def _kernel_inputs(g: EssentialHypergraph):
    indptr, inc = g.incidence
    return g.n_vertices, g.edges, g.essential, indptr, inc


def _core_from_masks(g, vertex_mask):
    edge_mask = np.all(vertex_mask[g.edges], axis=1) if g.n_edges else np.zeros(0, dtype=bool)
    return StarCore(g, vertex_mask, edge_mask)


def peel_star_core(g: EssentialHypergraph, seed: int | None = None):
    """Queue-based peeling in O(total incidence).

    With ``seed`` the vertex labels are randomly permuted first, which
    changes the removal order but (by order independence) not the core.
    """
    if seed is None:
        order, gen = kernels.peel_sequential(*_kernel_inputs(g))
    else:
        perm = np.random.default_rng(seed).permutation(g.n_vertices).astype(np.int32)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(g.n_vertices, dtype=np.int32)
        relabelled = EssentialHypergraph(g.n_vertices, g.signs[inv], perm[g.edges],
                                         perm[g.essential], g.source)
        order, gen = kernels.peel_sequential(*_kernel_inputs(relabelled))
        order = inv[order]
        gen = gen[perm]
    core = _core_from_masks(g, gen < 0)
    return core, PeelTrace(order, gen, None)


def parallel_rounds(g: EssentialHypergraph, i_max: int = 1 << 62) -> tuple:
    """Synchronous rounds H(0) >= H(1) >= ...; returns (StarCore, PeelTrace).

    Row i of the round statistics describes H(i) before its peel: X = alive
    vertices, Y = alive edges (by essential sign), A = vertices dying in
    round i, B = vertices essential in exactly one alive edge.  When the
    process stops at ``i_max`` the returned core is H(i_max), not the *-core.
    """
    n, edges, ess, indptr, inc = _kernel_inputs(g)
    death, stats, edge_alive = kernels.parallel_rounds(n, edges, ess, indptr, inc, g.signs, int(i_max))
    order = np.argsort(np.where(death < 0, np.iinfo(np.int32).max, death), kind="stable")
    order = order[death[order] >= 0].astype(np.int32)
    core = StarCore(g, death < 0, edge_alive)
    return core, PeelTrace(order, death, stats)


# -- exact *-depth -----------------------------------------------------------

def _vertex_distances(g: EssentialHypergraph, x: int, limit: int) -> dict:
    dist = {x: 0}
    frontier = deque([x])
    while frontier:
        v = frontier.popleft()
        if dist[v] >= limit:
            continue
        for e in g.edges_of(v):
            for u in g.edges[e]:
                u = int(u)
                if u not in dist:
                    dist[u] = dist[v] + 1
                    frontier.append(u)
    return dist


def _peels_within(g: EssentialHypergraph, x: int, ball: set) -> bool:
    """Peel only vertices of ``ball`` (against all edges of g); is x removed?"""
    deg = {}
    for v in ball:
        deg[v] = 0
    alive = {}
    for v in ball:
        for e in g.edges_of(v):
            e = int(e)
            if e not in alive:
                alive[e] = True
                u = int(g.essential[e])
                if u in deg:
                    deg[u] += 1
    # edges with essential vertex inside the ball but lying wholly outside cannot exist:
    # an edge contains its essential vertex, so it was reached above
    queue = deque(v for v in ball if deg[v] == 0)
    removed = set()
    while queue:
        v = queue.popleft()
        if v in removed:
            continue
        removed.add(v)
        if v == x:
            return True
        for e in g.edges_of(v):
            e = int(e)
            if not alive.get(e, False):
                continue
            alive[e] = False
            u = int(g.essential[e])
            if u in deg:
                deg[u] -= 1
                if deg[u] == 0:
                    queue.append(u)
    return x in removed


def exact_star_depth(g: EssentialHypergraph, x: int, upper: int | None = None) -> float:
    """Minimum over peeling chains ending at x of the largest distance to x.

    A chain of depth <= D exists iff peeling restricted to the distance-D
    ball around x removes x, because removability is monotone in what has
    already been removed.
    """
    if upper is None:
        upper = g.n_vertices
    dist = _vertex_distances(g, x, upper)
    for D in range(0, upper + 1):
        ball = {v for v, d in dist.items() if d <= D}
        if _peels_within(g, x, ball):
            return float(D)
        if len(ball) == len(dist) and D >= max(dist.values()):
            break
    return math.inf


@dataclass(frozen=True)
class StarDepth:
    surrogate: np.ndarray       # parallel-round index, inf on the core
    exact: np.ndarray | None    # minimum chain depth, computed on small graphs


def star_depth(g: EssentialHypergraph, exact: bool | None = None) -> StarDepth:
    _, trace = parallel_rounds(g)
    surrogate = trace.star_depth
    if exact is None:
        exact = g.n_vertices <= EXACT_DEPTH_LIMIT
    ex = None
    if exact:
        ex = np.full(g.n_vertices, math.inf)
        for v in range(g.n_vertices):
            r = trace.removal_round[v]
            if r >= 0:
                ex[v] = exact_star_depth(g, v, int(r))
    return StarDepth(surrogate, ex)


@dataclass(frozen=True)
class CoreStats:
    core_vertices: int
    core_edges: int
    core_lplus: int
    core_lminus: int
    h1_plus: int
    h1_minus: int
    branching_ratio: float


def core_stats(c: StarCore) -> CoreStats:
    nv = int(c.vertices.size)
    if nv == 0:
        return CoreStats(0, 0, 0, 0, 0, 0, 0.0)
    k = c.gamma.k
    sv = c.gamma.signs[c.vertices]
    h1p, h1m = int(c.h1_plus.size), int(c.h1_minus.size)
    return CoreStats(nv, int(c.edge_ids.size), int((sv > 0).sum()), int((sv < 0).sum()),
                     h1p, h1m, (k - 1) * (h1p + h1m) / nv)
