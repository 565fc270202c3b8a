"""Flippable sets, their decomposition, closure, and exact l-frozen variables.

Everything here works on a :class:`~frozencsp.core.StarCore` (for the set
predicates) or on a small instance whose solutions can be enumerated (for
the exact frozen sets).  Vertex sets are plain Python sets of 0-based ids.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .core import StarCore, build_gamma, parallel_rounds, peel_star_core, star_depth
from .errors import CheckFailure, ContractError, InputError, ScaleError
from .model import CSPModel
from .sampler import (MAX_UNIFORM_N, CSPInstance, derive_seed, enumerate_solutions,
                      sample_uniform_small, sigma_to_mask)

MAX_EXHAUSTIVE_H1 = 24


def _as_set(S) -> set:
    return {int(v) for v in S}


def _check_subset(core: StarCore, S: set, what: str = "S") -> None:
    bad = [v for v in S if not (0 <= v < core.gamma.n_vertices and core.vertex_mask[v])]
    if bad:
        raise InputError(f"{what} is not contained in the *-core (e.g. vertex {bad[0]})")


def _violations(core: StarCore, S: set):
    """(x, edge) pairs with x in S essential in a core edge meeting S only at x."""
    g = core.gamma
    for x in sorted(S):
        for e in core.essential_edges_of(x):
            if not any(int(u) in S for u in g.edges[e] if u != x):
                yield x, int(e)


def is_flippable(core: StarCore, S) -> bool:
    """Every core edge in which some x of S is essential contains another vertex of S."""
    S = _as_set(S)
    _check_subset(core, S)
    return next(_violations(core, S), None) is None


# -- decomposition -----------------------------------------------------------

@dataclass(frozen=True)
class FlippableDecomposition:
    S: frozenset
    out_edge: dict        # x -> x' for x in S & H1 (the functional digraph D(S))
    A_S: frozenset        # S \ H1, the out-degree-0 vertices
    C_S: frozenset        # vertices on directed cycles of D(S)


def _functional_cycles(out_edge: dict) -> set:
    on_cycle = set()
    state = {}
    for start in sorted(out_edge):
        path = []
        v = start
        while v in out_edge and v not in state:
            state[v] = start
            path.append(v)
            v = out_edge[v]
        if v in state and state[v] == start:
            on_cycle.update(path[path.index(v):])
    return on_cycle


def decompose_flippable(core: StarCore, S, check: bool = True) -> FlippableDecomposition:
    """Build D(S) with lowest-index targets and split S into A_S and C_S.

    With ``check`` the three decomposition properties are verified and a
    CheckFailure is raised if any fails: A_S is weakly flippable with
    witness S & H1, C_S is cyclic, and S lies in closure(A_S | C_S).
    """
    S = _as_set(S)
    _check_subset(core, S)
    if not is_flippable(core, S):
        raise ContractError("decompose_flippable needs a flippable set")
    h1 = {v for v in S if core.h1_edge[v] >= 0}
    out_edge = {}
    for x in sorted(h1):
        targets = [int(u) for u in core.e(x) if u != x and int(u) in S]
        out_edge[x] = min(targets)
    A_S = frozenset(S - h1)
    C_S = frozenset(_functional_cycles(out_edge))
    dec = FlippableDecomposition(frozenset(S), out_edge, A_S, C_S)
    if check:
        if not is_flippable(core, A_S | h1):
            raise CheckFailure("A_S is not weakly flippable with witness S & H1")
        if not is_cyclic(core, C_S):
            raise CheckFailure("C_S is not cyclic")
        if not S <= closure(core, A_S | C_S):
            raise CheckFailure("S is not contained in closure(A_S | C_S)")
        for a, b in itertools.combinations(_cycles_of(out_edge, C_S), 2):
            if a & b:
                raise CheckFailure("cycles of D(S) are not vertex-disjoint")
    return dec


def _cycles_of(out_edge: dict, on_cycle) -> list:
    seen, cycles = set(), []
    for v in sorted(on_cycle):
        if v in seen:
            continue
        cyc = set()
        u = v
        while u not in cyc:
            cyc.add(u)
            u = out_edge[u]
        seen |= cyc
        cycles.append(cyc)
    return cycles


# -- closure -----------------------------------------------------------------

def _reverse_h1(core: StarCore) -> dict:
    """u -> sorted w in H1 with u in e(w), u != w."""
    rev: dict = {}
    for w in core.h1:
        w = int(w)
        for u in core.e(w):
            u = int(u)
            if u != w:
                rev.setdefault(u, []).append(w)
    return rev


def closure(core: StarCore, A) -> set:
    """A together with every H1 vertex that has a chain through H1 \\ A into A.

    Worklist search: start with C empty and L = A; repeatedly move the lowest
    u from L to C and put into L each w in H1 outside C and L with u in e(w).
    """
    A = _as_set(A)
    _check_subset(core, A, "A")
    rev = _reverse_h1(core)
    in_h1 = core.h1_edge >= 0
    C: set = set()
    L = set(A)
    heap = sorted(L)
    while heap:
        u = heapq.heappop(heap)
        L.discard(u)
        C.add(u)
        for w in rev.get(u, ()):
            if in_h1[w] and w not in C and w not in L:
                L.add(w)
                heapq.heappush(heap, w)
    return C


# -- weakly flippable and cyclic ---------------------------------------------

def _flip_masks(core: StarCore):
    """x -> list of bitmasks of f \\ {x} over the core edges f where x is essential."""
    g = core.gamma
    out = {}
    for x in core.vertices:
        x = int(x)
        masks = []
        for e in core.essential_edges_of(x):
            mk = 0
            for u in g.edges[e]:
                if u != x:
                    mk |= 1 << int(u)
            masks.append(mk)
        out[x] = masks
    return out


def _mask_flippable(masks: dict, members, S_mask: int) -> bool:
    return all(mk & S_mask for x in members for mk in masks[x])


def _greedy_weak_witness(core: StarCore, A: set, psi: int):
    S = set(A)
    P: set = set()
    in_h1 = core.h1_edge >= 0
    while True:
        bad = next(_violations(core, S), None)
        if bad is None:
            return tuple(sorted(P))
        x, e = bad
        cand = sorted(int(u) for u in core.gamma.edges[e] if u != x and in_h1[u] and u not in S)
        if not cand or len(P) >= psi:
            return None
        S.add(cand[0])
        P.add(cand[0])


def is_weakly_flippable(core: StarCore, A, psi: int, heuristic: bool = False):
    """A smallest P within H1, |P| <= psi, making A | P flippable; None if there is none.

    The search is exhaustive over subsets of H1 by increasing size, which is
    only attempted for |H1| <= 24.  With ``heuristic`` a greedy repair is
    used instead on larger cores; its None is not a proof of absence.
    """
    A = _as_set(A)
    _check_subset(core, A, "A")
    in_h1 = core.h1_edge >= 0
    if any(in_h1[v] for v in A):
        raise InputError("A must avoid H1")
    h1 = [int(v) for v in core.h1]
    if len(h1) > MAX_EXHAUSTIVE_H1:
        if not heuristic:
            raise ScaleError(f"|H1| = {len(h1)} > {MAX_EXHAUSTIVE_H1}; pass heuristic=True "
                             "for the non-exhaustive greedy search")
        return _greedy_weak_witness(core, A, psi)
    masks = _flip_masks(core)
    a_mask = sum(1 << v for v in A)
    for size in range(0, min(psi, len(h1)) + 1):
        for P in itertools.combinations(h1, size):
            S_mask = a_mask
            for v in P:
                S_mask |= 1 << v
            if _mask_flippable(masks, itertools.chain(A, P), S_mask):
                return tuple(P)
    return None


def cyclic_permutation(core: StarCore, C):
    """pi with pi(x) in e(x) for every x in C, as a dict, or None."""
    C = sorted(_as_set(C))
    _check_subset(core, set(C), "C")
    if any(core.h1_edge[v] < 0 for v in C):
        raise InputError("C must lie in H1")
    if not C:
        return {}
    pos = {v: j for j, v in enumerate(C)}
    rows, cols = [], []
    for j, x in enumerate(C):
        for u in core.e(x):
            u = int(u)
            if u != x and u in pos:
                rows.append(j)
                cols.append(pos[u])
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(C), len(C)))
    match = maximum_bipartite_matching(graph, perm_type="column")
    if np.any(match < 0):
        return None
    return {C[j]: C[int(match[j])] for j in range(len(C))}


def is_cyclic(core: StarCore, C) -> bool:
    """A permutation pi of C exists with pi(x) in e(x) for every x in C."""
    return cyclic_permutation(core, C) is not None


# -- exact frozen sets -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SolutionGraph:
    """All solutions of F (bitmasks, sorted) with l-move adjacency computed on demand."""

    n: int
    solutions: np.ndarray
    ell: int

    def _neighbours(self, frontier: np.ndarray, unvisited: np.ndarray) -> np.ndarray:
        """Positions of unvisited solutions within distance ell of the frontier.

        Either every flip set of size <= ell is applied to the frontier, or
        the frontier is compared against all unvisited solutions, whichever
        touches fewer candidates.
        """
        n, ell, sols = self.n, self.ell, self.solutions
        flips = sum(math.comb(n, j) for j in range(1, ell + 1))
        cand_idx = np.flatnonzero(unvisited)
        if flips <= max(cand_idx.size, 1) and flips <= 1 << 16:
            cand = (frontier[:, None] ^ _flip_set(n, ell)[None, :]).ravel()
            pos = np.searchsorted(sols, cand)
            inside = pos < sols.size
            pos, cand = pos[inside], cand[inside]
            found = np.unique(pos[sols[pos] == cand])
            return found[unvisited[found]]
        cands = sols[cand_idx]
        near = np.zeros(cand_idx.size, dtype=bool)
        for start in range(0, frontier.size, 256):
            f = frontier[start:start + 256]
            d = np.bitwise_count((f[:, None] ^ cands[None, :]).astype(np.uint64))
            near |= np.any(d <= ell, axis=0)
        return cand_idx[near]

    def component(self, mask: int) -> np.ndarray:
        """Solutions reachable from ``mask`` by moves of at most ell variables."""
        sols = self.solutions
        start = int(np.searchsorted(sols, mask))
        if start >= sols.size or sols[start] != mask:
            raise ContractError("sigma is not a solution")
        if self.ell >= self.n:
            return sols
        unvisited = np.ones(sols.size, dtype=bool)
        unvisited[start] = False
        frontier = sols[[start]]
        comp = [start]
        while frontier.size:
            nb = self._neighbours(frontier, unvisited)
            unvisited[nb] = False
            comp.extend(nb.tolist())
            frontier = sols[nb]
        return sols[np.sort(np.array(comp))]


_FLIP_CACHE: dict = {}


def _flip_set(n: int, ell: int) -> np.ndarray:
    key = (n, ell)
    if key not in _FLIP_CACHE:
        masks = []
        for j in range(1, ell + 1):
            for combo in itertools.combinations(range(n), j):
                masks.append(sum(1 << v for v in combo))
        _FLIP_CACHE[key] = np.array(masks, dtype=np.int64)
    return _FLIP_CACHE[key]


def frozen_from_component(comp: np.ndarray, sigma, n: int) -> set:
    sigma = np.asarray(sigma)
    all_plus = int(np.bitwise_and.reduce(comp)) if comp.size else 0
    any_plus = int(np.bitwise_or.reduce(comp)) if comp.size else 0
    out = set()
    for v in range(n):
        if sigma[v] > 0 and (all_plus >> v) & 1:
            out.add(v)
        elif sigma[v] < 0 and not (any_plus >> v) & 1:
            out.add(v)
    return out


def exact_frozen_set(F: CSPInstance, sigma, ell: int, m: CSPModel,
                     solutions: np.ndarray | None = None) -> set:
    """Variables on which every solution l-path-connected to sigma agrees with sigma."""
    if F.n > MAX_UNIFORM_N:
        raise ScaleError(f"exact frozen sets are computed only for n <= {MAX_UNIFORM_N}")
    if ell < 1:
        raise InputError("ell must be at least 1")
    mm = m.explicit()
    sigma = np.asarray(sigma, dtype=np.int8)
    if not F.satisfied(mm, sigma).all():
        raise ContractError("sigma is not a solution of F")
    sols = enumerate_solutions(F, mm) if solutions is None else solutions
    comp = SolutionGraph(F.n, sols, ell).component(sigma_to_mask(sigma))
    return frozen_from_component(comp, sigma, F.n)


# -- solution differences, peeling chains and cycle proximity --------------

def symmetric_difference_flippable(core: StarCore, sigma, solutions: np.ndarray) -> np.ndarray:
    """For each solution s, is (sigma xor s) restricted to the core flippable?"""
    g = core.gamma
    n = g.n_vertices
    sig_mask = sigma_to_mask(sigma)
    diff = (solutions[:, None] ^ sig_mask) >> np.arange(n)[None, :] & 1  # (nsol, n)
    diff = diff.astype(bool) & core.vertex_mask[None, :]
    ok = np.ones(solutions.size, dtype=bool)
    for e in core.edge_ids:
        x = int(g.essential[e])
        others = [int(u) for u in g.edges[e] if u != x]
        ok &= ~diff[:, x] | diff[:, others].any(axis=1)
    return ok


def canonical_chain(g, death: np.ndarray, x: int) -> set:
    """A peeling chain for a peeled x: each essential edge of a chain vertex is
    cut by its earliest-dying non-essential vertex (lowest id on ties)."""
    if death[x] < 0:
        raise InputError(f"vertex {x} is in the *-core")
    chain = set()
    stack = [x]
    while stack:
        v = stack.pop()
        if v in chain:
            continue
        chain.add(v)
        for e in g.edges_of(v):
            if g.essential[e] != v:
                continue
            cut = min((int(u) for u in g.edges[e] if u != v and death[u] >= 0),
                      key=lambda u: (death[u], u))
            if death[cut] >= death[v]:
                raise CheckFailure("peeling chain is not time-ordered")
            stack.append(cut)
    return chain


def _incidence_has_cycle(F: CSPInstance, constraints) -> bool:
    """Does the variable/constraint incidence graph of these constraints contain a cycle?"""
    parent = {}

    def find(a):
        while parent.setdefault(a, a) != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for c in constraints:
        for v in F.tuples[c]:
            a, b = find(("c", int(c))), find(("v", int(v)))
            if a == b:
                return True
            parent[a] = b
    return False


def constraints_touching(F: CSPInstance, vertices) -> np.ndarray:
    mask = np.isin(F.tuples, np.fromiter(vertices, dtype=np.int64)).any(axis=1)
    return np.flatnonzero(mask)


def chain_is_acyclic(F: CSPInstance, g, death: np.ndarray, x: int) -> bool:
    chain = canonical_chain(g, death, x)
    return not _incidence_has_cycle(F, constraints_touching(F, chain))


def near_short_cycle(F: CSPInstance, g, death: np.ndarray, x: int) -> bool:
    """Peeled x: its chain's constraint set W is cyclic.  Core x: two of its
    constraints share another variable."""
    if death[x] >= 0:
        return not chain_is_acyclic(F, g, death, x)
    return _incidence_has_cycle(F, constraints_touching(F, [x]))


# -- scan --------------------------------------------------------------------

@dataclass
class FreezeTrial:
    trial: int
    seed: int
    n_solutions: int
    in_core: np.ndarray
    star_depth: np.ndarray
    frozen: dict                      # ell -> bool array over variables
    near_cycle: np.ndarray
    difference_ok: bool
    retries: int


@dataclass
class FreezeScan:
    n: int
    M: int
    ells: tuple
    trials: list = field(default_factory=list)

    def agreement(self, ell: int) -> dict:
        """Counts of (core, frozen) combinations; exceptions split by cycle proximity."""
        out = {"core_frozen": 0, "core_unfrozen": 0, "peeled_frozen": 0, "peeled_unfrozen": 0,
               "exceptions_near_cycle": 0, "exceptions_far_from_cycle": 0}
        for t in self.trials:
            fr = t.frozen[ell]
            for c, f, cyc in zip(t.in_core, fr, t.near_cycle):
                key = ("core_" if c else "peeled_") + ("frozen" if f else "unfrozen")
                out[key] += 1
                if c != f:
                    out["exceptions_near_cycle" if cyc else "exceptions_far_from_cycle"] += 1
        total = sum(out[k] for k in ("core_frozen", "core_unfrozen", "peeled_frozen", "peeled_unfrozen"))
        out["agreement"] = (out["core_frozen"] + out["peeled_unfrozen"]) / total if total else 1.0
        return out


def freeze_trial(m: CSPModel, n: int, M: int, ells, trial: int, seed: int) -> FreezeTrial:
    draw = sample_uniform_small(m, n, M, seed)
    mm = m.explicit()
    F, sigma = draw.instance, draw.sigma
    sols = enumerate_solutions(F, mm)
    g = build_gamma(F, sigma, mm)
    core, trace = parallel_rounds(g)
    depth = star_depth(g).exact
    frozen = {}
    for ell in ells:
        fz = exact_frozen_set(F, sigma, ell, mm, sols)
        frozen[ell] = np.array([v in fz for v in range(n)])
    death = trace.removal_round
    near = np.array([near_short_cycle(F, g, death, v) for v in range(n)])
    difference_ok = bool(symmetric_difference_flippable(core, sigma, sols).all())
    if not difference_ok:
        raise CheckFailure(f"trial {trial}: a solution differs from sigma on a non-flippable core set")
    return FreezeTrial(trial, seed, int(sols.size), core.vertex_mask.copy(), depth, frozen, near,
                       difference_ok, draw.retries)


def frozen_scan(m: CSPModel, n: int, M: int, ells=(1,), trials: int = 1, seed: int = 0) -> FreezeScan:
    if n > MAX_UNIFORM_N:
        raise ScaleError(f"freeze scans enumerate solutions and need n <= {MAX_UNIFORM_N}")
    scan = FreezeScan(n, M, tuple(ells))
    for t in range(trials):
        scan.trials.append(freeze_trial(m, n, M, ells, t, derive_seed(seed, t)))
    return scan
