"""Random instances: the plain model C, the planted model P, the desk-scale
uniform model U, and essential hypergraphs drawn directly (Model A and the
Essential Model).

Every sampler takes an integer seed and builds its own numpy Generator, so
outputs are a pure function of the arguments.  Variables are 0-based in
memory; the instance file format writes them 1-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import kernels
from .core import EssentialHypergraph
from .errors import CheckFailure, InputError, SamplingError, ScaleError
from .model import CSPModel

MAX_REJECTIONS = 10 ** 6
MAX_UNIFORM_N = 24
MAX_UNIFORM_RETRIES = 10 ** 4


def derive_seed(root: int, trial: int) -> int:
    """Independent 64-bit seed for trial ``trial`` of a run seeded with ``root``."""
    ss = np.random.SeedSequence(int(root), spawn_key=(int(trial),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def random_tuples(rng: np.random.Generator, n: int, k: int, count: int) -> np.ndarray:
    """``count`` uniform ordered k-tuples of distinct variables from range(n)."""
    if n < k:
        raise InputError(f"need n >= k, got n={n}, k={k}")
    if count == 0:
        return np.zeros((0, k), dtype=np.int32)
    if n < 4 * k * k:
        keys = rng.random((count, n))
        return np.argsort(keys, axis=1)[:, :k].astype(np.int32)
    out = rng.integers(0, n, size=(count, k), dtype=np.int64)
    while True:
        srt = np.sort(out, axis=1)
        bad = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
        if bad.size == 0:
            return out.astype(np.int32)
        out[bad] = rng.integers(0, n, size=(bad.size, k), dtype=np.int64)


def local_indices(tuples: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Truth-table index of each constraint's local assignment."""
    k = tuples.shape[1]
    bits = (sigma[tuples] > 0).astype(np.int64)
    return bits @ (1 << np.arange(k - 1, -1, -1, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class CSPInstance:
    """M constraints over n variables; member indices refer to model.explicit()."""

    n: int
    k: int
    members: np.ndarray  # int32 (M,)
    tuples: np.ndarray   # int32 (M, k), 0-based, distinct within a row
    model_name: str = "custom"

    def __post_init__(self):
        members = np.ascontiguousarray(self.members, dtype=np.int32).reshape(-1)
        tuples = np.ascontiguousarray(self.tuples, dtype=np.int32).reshape(-1, self.k)
        if members.shape[0] != tuples.shape[0]:
            raise InputError("members and tuples differ in length")
        if tuples.size:
            if tuples.min() < 0 or tuples.max() >= self.n:
                raise InputError("variable index out of range")
            srt = np.sort(tuples, axis=1)
            if np.any(srt[:, 1:] == srt[:, :-1]):
                raise InputError("constraint tuple with a repeated variable")
        members.setflags(write=False)
        tuples.setflags(write=False)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "tuples", tuples)

    @property
    def M(self) -> int:
        return int(self.members.shape[0])

    def local_indices(self, sigma) -> np.ndarray:
        return local_indices(self.tuples, np.asarray(sigma))

    def satisfied(self, m: CSPModel, sigma) -> np.ndarray:
        if self.M == 0:
            return np.zeros(0, dtype=bool)
        return m.tables[self.members, self.local_indices(sigma)].astype(bool)

    def prefix(self, M: int) -> "CSPInstance":
        return CSPInstance(self.n, self.k, self.members[:M], self.tuples[:M], self.model_name)

    def __eq__(self, other) -> bool:
        return (isinstance(other, CSPInstance) and self.n == other.n and self.k == other.k
                and np.array_equal(self.members, other.members)
                and np.array_equal(self.tuples, other.tuples))


@dataclass(frozen=True, eq=False)
class PlantedPair:
    instance: CSPInstance
    sigma: np.ndarray
    rejection_count: int


@dataclass(frozen=True, eq=False)
class UniformDraw:
    instance: CSPInstance
    sigma: np.ndarray
    retries: int
    n_solutions: int


def _draw_members(rng, m: CSPModel, count: int) -> np.ndarray:
    weights = np.asarray(m.weights)
    if weights.size == 1:
        return np.zeros(count, dtype=np.int32)
    return rng.choice(weights.size, size=count, p=weights).astype(np.int32)


def random_sigma(rng, n: int) -> np.ndarray:
    return (2 * rng.integers(0, 2, size=n) - 1).astype(np.int8)


def sample_csp(m: CSPModel, n: int, M: int, seed: int) -> CSPInstance:
    """C(Upsilon, n, M): members by weight, tuples uniform."""
    if n < m.arity:
        raise InputError(f"need n >= k, got n={n}, k={m.arity}")
    if M < 0:
        raise InputError("M must be non-negative")
    mm = m.explicit()
    rng = np.random.default_rng(seed)
    members = _draw_members(rng, mm, M)
    tuples = random_tuples(rng, n, m.arity, M)
    return CSPInstance(n, m.arity, members, tuples, m.name)


def sample_planted(m: CSPModel, n: int, M: int, seed: int,
                   max_rejections: int = MAX_REJECTIONS) -> PlantedPair:
    """P(Upsilon, n, M): uniform sigma, each constraint redrawn until sigma satisfies it."""
    if n < m.arity:
        raise InputError(f"need n >= k, got n={n}, k={m.arity}")
    if M < 0:
        raise InputError("M must be non-negative")
    m.require("feasible")
    mm = m.explicit()
    tables = mm.tables
    rng = np.random.default_rng(seed)
    sigma = random_sigma(rng, n)
    k = m.arity
    n_plus = int((sigma > 0).sum())
    if M and satisfying_counts(mm) @ _pattern_probabilities(k, n_plus, n - n_plus) <= 0:
        raise SamplingError("no constraint can be satisfied by this sigma (n too small)")
    members = np.zeros(M, dtype=np.int32)
    tuples = np.zeros((M, k), dtype=np.int32)
    attempts = np.zeros(M, dtype=np.int64)
    pending = np.arange(M)
    rejections = 0
    while pending.size:
        mem = _draw_members(rng, mm, pending.size)
        tup = random_tuples(rng, n, k, pending.size)
        ok = tables[mem, local_indices(tup, sigma)].astype(bool)
        members[pending[ok]] = mem[ok]
        tuples[pending[ok]] = tup[ok]
        attempts[pending] += 1
        rejections += int((~ok).sum())
        pending = pending[~ok]
        if pending.size and attempts[pending].max() >= max_rejections:
            raise SamplingError(f"constraint rejected {max_rejections} times; is the model feasible?")
    inst = CSPInstance(n, k, members, tuples, m.name)
    if not inst.satisfied(mm, sigma).all():
        raise CheckFailure("planted sigma violates its own instance")
    return PlantedPair(inst, sigma, rejections)


def enumerate_solutions(F: CSPInstance, m: CSPModel) -> np.ndarray:
    """All solutions of F as int64 bitmasks, bit v set meaning x_v = +1."""
    if F.n > MAX_UNIFORM_N:
        raise ScaleError(f"exhaustive enumeration is capped at n <= {MAX_UNIFORM_N}")
    return kernels.enumerate_solutions(F.n, np.ascontiguousarray(m.tables), F.members, F.tuples)


def mask_to_sigma(mask: int, n: int) -> np.ndarray:
    return np.where((int(mask) >> np.arange(n)) & 1, 1, -1).astype(np.int8)


def sigma_to_mask(sigma) -> int:
    out = 0
    for v, s in enumerate(np.asarray(sigma)):
        if s > 0:
            out |= 1 << v
    return out


def sample_uniform_small(m: CSPModel, n: int, M: int, seed: int,
                         max_retries: int = MAX_UNIFORM_RETRIES) -> UniformDraw:
    """U(Upsilon, n, M) by exhaustive enumeration, redrawing unsatisfiable instances."""
    if n > MAX_UNIFORM_N:
        raise ScaleError(f"the uniform model is enumerated only for n <= {MAX_UNIFORM_N}")
    rng = np.random.default_rng(seed)
    mm = m.explicit()
    for retry in range(max_retries):
        F = sample_csp(m, n, M, int(rng.integers(0, 2 ** 63)))
        sols = enumerate_solutions(F, mm)
        if sols.size:
            sigma = mask_to_sigma(sols[rng.integers(sols.size)], n)
            if not F.satisfied(mm, sigma).all():
                raise CheckFailure("enumerated solution violates the instance")
            return UniformDraw(F, sigma, retry, int(sols.size))
    raise SamplingError(f"{max_retries} consecutive unsatisfiable instances")


# -- hyperedge types ---------------------------------------------------------

def type_counts(m: CSPModel) -> dict:
    """c(s, a) = E_phi #{(y, i) in S^e_phi: y_i = s, a other entries +1}.

    Each forbidden x and position i give exactly one essential pair
    (x with x_i flipped, i) in a 1-essential constraint, which is how the
    count is taken.
    """
    m.require("one_essential")
    k = m.arity
    out = {(s, a): 0.0 for s in (1, -1) for a in range(k)}
    if m.sign_closed:
        # every coordinate of s o x is an independent fair sign
        total = m.expect(lambda phi: phi.n_forbidden) * k
        for s in (1, -1):
            for a in range(k):
                out[(s, a)] = total * 0.5 * math.comb(k - 1, a) / 2 ** (k - 1)
        return out
    for phi, w in zip(m.members, m.weights):
        for x in phi.forbidden:
            plus = bin(x).count("1")
            for i in range(k):
                xi_plus = (x >> (k - 1 - i)) & 1
                s = -1 if xi_plus else 1
                out[(s, plus - xi_plus)] += w
    return out


def satisfying_counts(m: CSPModel) -> np.ndarray:
    """E_phi #{y in S_phi with j entries +1} for j = 0..k."""
    k = m.arity
    binom = np.array([math.comb(k, j) for j in range(k + 1)], dtype=float)
    if m.sign_closed:
        return m.expect(lambda phi: phi.n_satisfying) * binom / 2 ** k
    forb = sum(w * phi.forbidden_by_weight() for phi, w in zip(m.members, m.weights))
    return binom - forb


def _falling_ratio(P: int, j: int, n: int) -> float:
    """(P)_j / (n)_j."""
    out = 1.0
    for t in range(j):
        out *= max(P - t, 0) / (n - t)
    return out


def _pattern_probabilities(k: int, n_plus: int, n_minus: int) -> np.ndarray:
    """P(a uniform ordered k-tuple of distinct vertices has a given pattern with j plus signs)."""
    n = n_plus + n_minus
    return np.array([_falling_ratio(n_plus, j, n) * _falling_ratio(n_minus, k - j, n - j)
                     for j in range(k + 1)])


@dataclass(frozen=True)
class TypeWeights:
    types: np.ndarray     # (T, 3) rows (s, a, b)
    weights: np.ndarray   # w(tau), conditional on an essential vertex
    essential_probability: float

    def conditional(self, s: int):
        """(types, w^s): weights restricted to essential sign s and renormalised."""
        sel = self.types[:, 0] == s
        w = self.weights[sel]
        total = w.sum()
        return self.types[sel], (w / total if total > 0 else w)

    def lookup(self, s: int, a: int) -> float:
        hit = np.flatnonzero((self.types[:, 0] == s) & (self.types[:, 1] == a))
        return float(self.weights[hit[0]]) if hit.size else 0.0


def type_weights(m: CSPModel, n_plus: int, n_minus: int) -> TypeWeights:
    """Exact w(tau) for a planted clause given |Lambda+| and |Lambda-|.

    An ordered tuple of distinct variables has a given sign pattern with j
    plus signs in (P)_j (N)_{k-j} ways, so each essential pair of that
    pattern is weighted by those falling factorials.
    """
    k = m.arity
    n = n_plus + n_minus
    if n < k:
        raise InputError("fewer vertices than the arity")
    counts = type_counts(m)
    sat = satisfying_counts(m)
    pattern = _pattern_probabilities(k, n_plus, n_minus)
    types, raw = [], []
    for (s, a), c in sorted(counts.items(), key=lambda t: (-t[0][0], t[0][1])):
        j = a + (1 if s > 0 else 0)
        types.append((s, a, k - 1 - a))
        raw.append(c * pattern[j])
    raw = np.array(raw)
    z = float(sat @ pattern)
    total = raw.sum()
    if total <= 0:
        raise SamplingError("no clause type with an essential vertex is possible")
    return TypeWeights(np.array(types, dtype=np.int64), raw / total, float(total / z))


def _complete_edges(rng, signs: np.ndarray, essential: np.ndarray, types: np.ndarray,
                    max_rounds: int = 10 ** 4) -> np.ndarray:
    """Fill each edge: essential vertex first, then a from Lambda+, then b from Lambda-."""
    k = int(types[0, 1] + types[0, 2] + 1) if types.size else 0
    E = essential.shape[0]
    out = np.zeros((E, k), dtype=np.int32)
    out[:, 0] = essential
    plus = np.flatnonzero(signs > 0)
    minus = np.flatnonzero(signs < 0)
    for a in np.unique(types[:, 1]) if E else []:
        rows = np.flatnonzero(types[:, 1] == a)
        b = k - 1 - a
        pending = rows
        for _ in range(max_rounds):
            if pending.size == 0:
                break
            if (a and plus.size == 0) or (b and minus.size == 0):
                raise SamplingError("type requests vertices from an empty sign class")
            cand = np.empty((pending.size, k), dtype=np.int64)
            cand[:, 0] = essential[pending]
            if a:
                cand[:, 1:1 + a] = plus[rng.integers(0, plus.size, size=(pending.size, a))]
            if b:
                cand[:, 1 + a:] = minus[rng.integers(0, minus.size, size=(pending.size, b))]
            srt = np.sort(cand, axis=1)
            good = ~np.any(srt[:, 1:] == srt[:, :-1], axis=1)
            out[pending[good]] = cand[good]
            pending = pending[~good]
        if pending.size:
            raise SamplingError("could not draw distinct vertices for a hyperedge type")
    return out


def sample_model_a(m: CSPModel, n: int, M: int, seed: int, thin: bool = True) -> EssentialHypergraph:
    """Model A: random sign split, then per edge a type, essential vertex and the rest.

    With ``thin`` (default) M counts constraints: each yields an edge with the
    exact finite-n probability of having an essential vertex, so the edge
    count matches Gamma of a planted instance.  Otherwise M edges are drawn.
    """
    m.require("one_essential")
    rng = np.random.default_rng(seed)
    signs = random_sigma(rng, n)
    n_plus = int((signs > 0).sum())
    tw = type_weights(m, n_plus, n - n_plus)
    E = int(rng.binomial(M, min(tw.essential_probability, 1.0))) if thin else int(M)
    if E == 0:
        return EssentialHypergraph.empty(n, signs, m.arity)
    choice = rng.choice(len(tw.weights), size=E, p=tw.weights)
    types = tw.types[choice]
    plus = np.flatnonzero(signs > 0)
    minus = np.flatnonzero(signs < 0)
    essential = np.empty(E, dtype=np.int32)
    sp = types[:, 0] > 0
    if sp.any():
        essential[sp] = plus[rng.integers(0, plus.size, size=int(sp.sum()))]
    if (~sp).any():
        essential[~sp] = minus[rng.integers(0, minus.size, size=int((~sp).sum()))]
    edges = _complete_edges(rng, signs, essential, types)
    return EssentialHypergraph(n, signs, edges, essential, np.full(E, -1, dtype=np.int32))


def sample_essential_model(vertex_signs, essential_vertices, m: CSPModel, seed: int) -> EssentialHypergraph:
    """Essential Model: signs and each edge's essential vertex are given; draw the rest."""
    m.require("one_essential")
    signs = np.asarray(vertex_signs, dtype=np.int8)
    essential = np.asarray(essential_vertices, dtype=np.int32).reshape(-1)
    n = signs.shape[0]
    rng = np.random.default_rng(seed)
    n_plus = int((signs > 0).sum())
    tw = type_weights(m, n_plus, n - n_plus)
    E = essential.shape[0]
    if E == 0:
        return EssentialHypergraph.empty(n, signs, m.arity)
    types = np.zeros((E, 3), dtype=np.int64)
    for s in (1, -1):
        sel = np.flatnonzero(signs[essential] == s)
        if sel.size:
            t, w = tw.conditional(s)
            types[sel] = t[rng.choice(len(w), size=sel.size, p=w)]
    edges = _complete_edges(rng, signs, essential, types)
    return EssentialHypergraph(n, signs, edges, essential, np.full(E, -1, dtype=np.int32))


# -- instance files ----------------------------------------------------------

def write_instance(path, F: CSPInstance, sigma=None) -> None:
    lines = [f"{F.n} {F.M} {F.k} {F.model_name}"]
    for mem, tup in zip(F.members.tolist(), F.tuples.tolist()):
        lines.append(" ".join([str(mem)] + [str(v + 1) for v in tup]))
    if sigma is not None:
        lines.append("".join("+" if s > 0 else "-" for s in np.asarray(sigma)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_instance(path):
    """Inverse of write_instance: returns (CSPInstance, sigma or None)."""
    try:
        rows = Path(path).read_text().split("\n")
        rows = [r for r in rows if r.strip()]
        n, M, k, name = rows[0].split()
        n, M, k = int(n), int(M), int(k)
        body = [list(map(int, r.split())) for r in rows[1:1 + M]]
    except (OSError, ValueError, IndexError) as exc:
        raise InputError(f"malformed instance file {path}: {exc}") from exc
    if len(body) != M or any(len(r) != k + 1 for r in body):
        raise InputError(f"malformed instance file {path}")
    arr = np.array(body, dtype=np.int64).reshape(M, k + 1)
    F = CSPInstance(n, k, arr[:, 0], arr[:, 1:] - 1, name)
    sigma = None
    if len(rows) > 1 + M:
        sigma = np.array([1 if c == "+" else -1 for c in rows[1 + M].strip()], dtype=np.int8)
        if sigma.shape != (n,):
            raise InputError("sigma line has the wrong length")
    return F, sigma
