"""Incremental greedy solver (a heuristic; nothing guarantees it succeeds).

Constraints are added one at a time to a growing instance while a current
solution is maintained.  When a new constraint is violated we pick the
closest satisfying pattern on its variables and, one variable at a time,
search breadth-first for a small set of extra flips that keeps every
earlier constraint satisfied.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .model import CSPModel
from .sampler import _draw_members, random_sigma, random_tuples

DEFAULT_BUDGET = 30
DEFAULT_EXPANSIONS = 10_000


@dataclass(frozen=True, eq=False)
class GreedyResult:
    success: bool
    constraints_added: int
    target: int
    repairs: int
    flips: int
    sigma: np.ndarray

    @property
    def density_reached(self) -> float:
        return self.constraints_added / len(self.sigma)


class _State:
    def __init__(self, m: CSPModel, n: int, sigma: np.ndarray):
        self.tables = m.tables.astype(bool)
        self.k = m.arity
        self.sigma = sigma
        self.members: list = []
        self.tuples: list = []
        self.by_var: list = [[] for _ in range(n)]

    def local(self, c: int, flipped=frozenset()) -> int:
        idx = 0
        for v in self.tuples[c]:
            s = self.sigma[v]
            if v in flipped:
                s = -s
            idx = (idx << 1) | (1 if s > 0 else 0)
        return idx

    def ok(self, c: int, flipped=frozenset()) -> bool:
        return bool(self.tables[self.members[c], self.local(c, flipped)])

    def add(self, member: int, tup) -> None:
        c = len(self.members)
        self.members.append(member)
        self.tuples.append(tuple(int(v) for v in tup))
        for v in self.tuples[c]:
            self.by_var[v].append(c)

    def first_violated(self, flipped: frozenset):
        touched = sorted({c for v in flipped for c in self.by_var[v]})
        for c in touched:
            if not self.ok(c, flipped):
                return c
        return None


def _nearest_pattern(table: np.ndarray, current: int, k: int) -> int:
    sat = np.flatnonzero(table)
    d = np.bitwise_count((sat ^ current).astype(np.uint64))
    return int(sat[np.argmin(d)])


def _repair(state: _State, v: int, locked: set, budget: int, max_expansions: int):
    """Smallest-first search for a flip set containing v that violates nothing."""
    start = frozenset([v])
    queue = deque([start])
    seen = {start}
    expansions = 0
    while queue and expansions < max_expansions:
        S = queue.popleft()
        expansions += 1
        bad = state.first_violated(S)
        if bad is None:
            return S
        if len(S) >= budget:
            continue
        for u in state.tuples[bad]:
            if u in S or u in locked:
                continue
            T = S | {u}
            if T not in seen:
                seen.add(T)
                queue.append(T)
    return None


def greedy_solve(m: CSPModel, n: int, M: int, seed: int, budget: int = DEFAULT_BUDGET,
                 max_expansions: int = DEFAULT_EXPANSIONS) -> GreedyResult:
    mm = m.explicit()
    rng = np.random.default_rng(seed)
    sigma = random_sigma(rng, n).astype(np.int64)
    state = _State(mm, n, sigma)
    members = _draw_members(rng, mm, M)
    tuples = random_tuples(rng, n, m.arity, M)
    repairs = flips = 0
    k = m.arity
    for i in range(M):
        mem, tup = int(members[i]), [int(v) for v in tuples[i]]
        table = state.tables[mem]
        cur = 0
        for v in tup:
            cur = (cur << 1) | (1 if sigma[v] > 0 else 0)
        if not table[cur]:
            target = _nearest_pattern(table, cur, k)
            change = [tup[j] for j in range(k) if ((cur ^ target) >> (k - 1 - j)) & 1]
            repairs += 1
            for v in change:
                if sigma[v] == (1 if (target >> (k - 1 - tup.index(v))) & 1 else -1):
                    continue  # already moved by an earlier repair
                S = _repair(state, v, set(tup) - {v}, budget, max_expansions)
                if S is None:
                    return GreedyResult(False, i, M, repairs, flips, sigma.astype(np.int8))
                for u in S:
                    sigma[u] = -sigma[u]
                flips += len(S)
            cur = 0
            for v in tup:
                cur = (cur << 1) | (1 if sigma[v] > 0 else 0)
            if not table[cur]:
                return GreedyResult(False, i, M, repairs, flips, sigma.astype(np.int8))
        state.add(mem, tup)
    return GreedyResult(True, M, M, repairs, flips, sigma.astype(np.int8))
