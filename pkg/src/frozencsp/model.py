"""Boolean constraint functions, CSP models and their structural properties.

Assignments live in {-1,+1}^k.  A local assignment is addressed by its
truth-table index: read the vector as bits with -1 -> 0 and +1 -> 1, the
first variable being the most significant bit.  Flipping position ``i``
therefore toggles bit ``k - 1 - i`` of the index.

A :class:`ConstraintFunction` is stored by its forbidden set I (the
indices it rejects).  Every quantity the thresholds need can be computed
from I alone, which lets arities well beyond truth-table scale work for
the closed-form constants; the dense truth table is materialised lazily
and only for k <= 20.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ConstructionError, ContractError, DomainError, InputError

MAX_TABLE_ARITY = 20
MAX_SPARSE_ARITY = 62
EXPLICIT_MEMBER_CAP = 1 << 16
BALANCE_GRID = np.linspace(0.0, 1.0, 1001)
BALANCE_TOL = 1e-12


# -- sign vectors and indices ------------------------------------------------

def check_signs(x: Sequence[int], k: int | None = None) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise InputError("sign vector must be one-dimensional")
    if k is not None and arr.shape[0] != k:
        raise InputError(f"expected a sign vector of length {k}, got {arr.shape[0]}")
    if not np.all((arr == 1) | (arr == -1)):
        raise InputError("sign vector entries must be -1 or +1")
    return arr.astype(np.int8)


def index_of(x: Sequence[int]) -> int:
    """Truth-table index of a sign vector (first variable most significant)."""
    idx = 0
    for v in x:
        idx = (idx << 1) | (1 if v > 0 else 0)
    return idx


def vector_of(index: int, k: int) -> np.ndarray:
    bits = [(index >> (k - 1 - i)) & 1 for i in range(k)]
    return np.array([1 if b else -1 for b in bits], dtype=np.int8)


def position_bit(i: int, k: int) -> int:
    return 1 << (k - 1 - i)


def _popcount(x: int) -> int:
    return bin(x).count("1")


def krawtchouk(d: int, w: int, k: int) -> int:
    """K_d(w) = sum_{|Q|=d} prod_{i in Q} z_i for any z with w entries equal to -1."""
    return sum((-1) ** j * math.comb(w, j) * math.comb(k - w, d - j)
               for j in range(0, min(d, w) + 1))


# -- constraint functions ----------------------------------------------------

@dataclass(frozen=True)
class ConstraintFunction:
    """phi: {-1,+1}^k -> {0,1}, stored by its set of forbidden indices."""

    arity: int
    forbidden: frozenset

    def __post_init__(self):
        if not isinstance(self.arity, (int, np.integer)) or self.arity < 1:
            raise InputError(f"arity must be a positive integer, got {self.arity!r}")
        if self.arity > MAX_SPARSE_ARITY:
            raise InputError(f"arity {self.arity} exceeds the supported maximum {MAX_SPARSE_ARITY}")
        size = 1 << self.arity
        for idx in self.forbidden:
            if not 0 <= idx < size:
                raise InputError(f"forbidden index {idx} out of range for arity {self.arity}")

    @classmethod
    def from_truth_table(cls, table: Sequence[bool]) -> "ConstraintFunction":
        arr = np.asarray(table, dtype=bool)
        k = int(round(math.log2(arr.size))) if arr.size else 0
        if arr.ndim != 1 or arr.size != (1 << k) or k < 1:
            raise InputError("truth table length must be 2^k for some k >= 1")
        if k > MAX_TABLE_ARITY:
            raise InputError(f"truth tables are capped at k <= {MAX_TABLE_ARITY}")
        return cls(k, frozenset(int(i) for i in np.flatnonzero(~arr)))

    @classmethod
    def from_forbidden(cls, k: int, vectors: Iterable[Sequence[int]]) -> "ConstraintFunction":
        return cls(k, frozenset(index_of(check_signs(v, k)) for v in vectors))

    @classmethod
    def constant_true(cls, k: int) -> "ConstraintFunction":
        return cls(k, frozenset())

    # sizes
    @property
    def n_forbidden(self) -> int:
        return len(self.forbidden)

    @property
    def n_satisfying(self) -> int:
        return (1 << self.arity) - len(self.forbidden)

    @cached_property
    def truth_table(self) -> np.ndarray:
        if self.arity > MAX_TABLE_ARITY:
            raise InputError(f"truth tables are capped at k <= {MAX_TABLE_ARITY}")
        table = np.ones(1 << self.arity, dtype=bool)
        if self.forbidden:
            table[np.fromiter(self.forbidden, dtype=np.int64)] = False
        table.setflags(write=False)
        return table

    def __call__(self, x: Sequence[int]) -> bool:
        return index_of(check_signs(x, self.arity)) not in self.forbidden

    def signed(self, s: Sequence[int]) -> "ConstraintFunction":
        """phi^s(x) = phi(s_1 x_1, ..., s_k x_k)."""
        mask = index_of(-check_signs(s, self.arity))
        return ConstraintFunction(self.arity, frozenset(i ^ mask for i in self.forbidden))

    def forbidden_by_weight(self) -> np.ndarray:
        """Counts of forbidden assignments by number of +1 entries."""
        counts = np.zeros(self.arity + 1)
        for idx in self.forbidden:
            counts[_popcount(idx)] += 1
        return counts

    def distance_histogram(self) -> dict:
        """Ordered-pair Hamming distance histogram over I x I."""
        idx = sorted(self.forbidden)
        hist: dict = {}
        if not idx:
            return hist
        if len(idx) > 64:
            arr = np.array(idx, dtype=np.uint64)
            dists = np.bitwise_count(arr[:, None] ^ arr[None, :]).ravel()
            for w, c in zip(*np.unique(dists, return_counts=True)):
                hist[int(w)] = int(c)
            return hist
        for a in idx:
            for b in idx:
                w = _popcount(a ^ b)
                hist[w] = hist.get(w, 0) + 1
        return hist

    def min_forbidden_distance(self) -> float:
        dist = [w for w in self.distance_histogram() if w > 0]
        return float(min(dist)) if dist else math.inf

    @cached_property
    def degree_weights(self) -> np.ndarray:
        """W_d = sum over |Q| = d of (phi_Q / phi_empty)^2, for d = 0..k.

        Computed from the forbidden set through Krawtchouk sums, so it is
        exact for any arity; agrees with :func:`fourier_expand` when k is
        small enough to expand directly.
        """
        k = self.arity
        n_sat = self.n_satisfying
        if n_sat == 0:
            raise DomainError("phi_empty = 0: the constraint has no satisfying assignment")
        hist = self.distance_histogram()
        weights = np.zeros(k + 1)
        weights[0] = 1.0
        for d in range(1, k + 1):
            total = sum(c * krawtchouk(d, w, k) for w, c in hist.items())
            weights[d] = total / n_sat / n_sat
        weights.setflags(write=False)
        return weights


def evaluate(phi: ConstraintFunction, x: Sequence[int]) -> bool:
    return phi(x)


def essential_variables(phi: ConstraintFunction, x: Sequence[int]) -> tuple:
    """All positions whose flip turns the satisfying assignment x unsatisfying."""
    xs = check_signs(x, phi.arity)
    idx = index_of(xs)
    if idx in phi.forbidden:
        raise ContractError("essential variables are only defined for satisfying assignments")
    return tuple(i for i in range(phi.arity)
                 if idx ^ position_bit(i, phi.arity) in phi.forbidden)


def essential_variable(phi: ConstraintFunction, x: Sequence[int]) -> int | None:
    """The unique essential position (0-based) of a satisfying x, or None.

    Raises DomainError when several positions are essential, which can only
    happen for a constraint that is not 1-essential.
    """
    found = essential_variables(phi, x)
    if len(found) > 1:
        raise DomainError(f"positions {found} are all essential; phi is not 1-essential")
    return found[0] if found else None


def essential_assignments(phi: ConstraintFunction) -> list:
    """Exhaustive list of (satisfying index, essential position) pairs."""
    k = phi.arity
    table = phi.truth_table
    out = []
    for idx in np.flatnonzero(table):
        for i in range(k):
            if not table[idx ^ position_bit(i, k)]:
                out.append((int(idx), i))
    return out


# -- per-constraint structural checks ----------------------------------------

def _table_feasible(table: np.ndarray, k: int) -> bool:
    idx = np.arange(table.size)
    for i in range(k):
        if np.any(~table & ~table[idx ^ position_bit(i, k)]):
            return False
    return True


def _table_one_essential(table: np.ndarray, k: int) -> bool:
    idx = np.arange(table.size)
    count = np.zeros(table.size, dtype=np.int32)
    for i in range(k):
        count += table & ~table[idx ^ position_bit(i, k)]
    return bool(np.all(count <= 1))


def _table_symmetric(table: np.ndarray) -> bool:
    return bool(np.array_equal(table, table[::-1]))


def _sparse_feasible(phi: ConstraintFunction) -> bool:
    return phi.distance_histogram().get(1, 0) == 0


def _sparse_one_essential(phi: ConstraintFunction) -> bool:
    k = phi.arity
    hits: dict = {}
    for x in phi.forbidden:
        for i in range(k):
            y = x ^ position_bit(i, k)
            if y in phi.forbidden:
                continue
            hits[y] = hits.get(y, 0) + 1
            if hits[y] > 1:
                return False
    return True


def _sparse_symmetric(phi: ConstraintFunction) -> bool:
    top = (1 << phi.arity) - 1
    return all((top ^ x) in phi.forbidden for x in phi.forbidden)


def constraint_properties(phi: ConstraintFunction, exhaustive: bool | None = None) -> dict:
    """feasible / symmetric / one_essential for one constraint.

    With ``exhaustive`` (default when k <= 20) the checks run over the
    dense truth table exactly as the definitions read; otherwise they are
    derived from pairwise structure of the forbidden set.
    """
    if exhaustive is None:
        exhaustive = phi.arity <= MAX_TABLE_ARITY
    if exhaustive:
        t = phi.truth_table
        return {"feasible": _table_feasible(t, phi.arity),
                "symmetric": _table_symmetric(t),
                "one_essential": _table_one_essential(t, phi.arity)}
    return {"feasible": _sparse_feasible(phi),
            "symmetric": _sparse_symmetric(phi),
            "one_essential": _sparse_one_essential(phi)}


def check_feasible_1essential_characterization(phi: ConstraintFunction) -> bool:
    """True iff every two forbidden assignments are at Hamming distance >= 3."""
    return phi.min_forbidden_distance() >= 3


# -- Fourier expansion -------------------------------------------------------

def _walsh_hadamard(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float).copy()
    h = 1
    while h < v.size:
        v = v.reshape(-1, 2, h)
        v = np.concatenate([v[:, 0, :] + v[:, 1, :], v[:, 0, :] - v[:, 1, :]], axis=1)
        v = v.reshape(-1)
        h *= 2
    return v


@dataclass(frozen=True)
class FourierTable:
    """Coefficients phi_Q indexed by subset mask (same bit order as indices)."""

    arity: int
    coefficients: np.ndarray

    def __getitem__(self, subset: Iterable[int]) -> float:
        mask = 0
        for i in subset:
            mask |= position_bit(i, self.arity)
        return float(self.coefficients[mask])

    @property
    def empty(self) -> float:
        return float(self.coefficients[0])

    def subset_sizes(self) -> np.ndarray:
        return np.bitwise_count(np.arange(self.coefficients.size, dtype=np.uint64)).astype(int)

    def degree_weights(self) -> np.ndarray:
        """sum_{|Q|=d} (phi_Q/phi_empty)^2 for each d."""
        sq = (self.coefficients / self.empty) ** 2
        return np.bincount(self.subset_sizes(), weights=sq, minlength=self.arity + 1)

    def reconstruct(self) -> np.ndarray:
        """sum_Q phi_Q prod_{i in Q} x_i at every index, i.e. the truth table as floats."""
        signs = np.where(self.subset_sizes() % 2 == 1, -1.0, 1.0)
        return _walsh_hadamard(self.coefficients * signs)


def fourier_expand(phi: ConstraintFunction) -> FourierTable:
    """phi_Q = 2^-k sum_x phi(x) prod_{i in Q} x_i.

    With x_i = 2 b_i - 1 the character equals (-1)^{|Q|} (-1)^{b.Q}, so the
    coefficients are a sign-corrected Walsh-Hadamard transform.
    """
    k = phi.arity
    wht = _walsh_hadamard(phi.truth_table.astype(float))
    sizes = np.bitwise_count(np.arange(1 << k, dtype=np.uint64))
    coeffs = np.where(sizes % 2 == 1, -wht, wht) / float(1 << k)
    coeffs.setflags(write=False)
    return FourierTable(k, coeffs)


# -- models ------------------------------------------------------------------

PROPERTY_NAMES = ("non_trivial", "feasible", "symmetric", "balance_dominated", "one_essential")


@dataclass(frozen=True)
class PropertyReport:
    non_trivial: bool
    feasible: bool
    symmetric: bool
    balance_dominated: bool
    one_essential: bool

    def missing(self) -> list:
        return [name for name in PROPERTY_NAMES if not getattr(self, name)]

    @property
    def ok(self) -> bool:
        return not self.missing()

    def as_dict(self) -> dict:
        return {name: bool(getattr(self, name)) for name in PROPERTY_NAMES}


def satisfaction_probability(model: "CSPModel", q) -> np.ndarray:
    """P(q): chance that a q-biased assignment satisfies a random member."""
    q = np.asarray(q, dtype=float)
    k = model.arity
    if model.sign_closed:
        # averaging over sign flips makes every coordinate unbiased
        return np.full(q.shape, model.expect(lambda phi: phi.n_satisfying / 2.0 ** k))
    counts = sum(w * phi.forbidden_by_weight() for phi, w in zip(model.members, model.weights))
    total = np.zeros(q.shape)
    for j in range(k + 1):
        if counts[j]:
            total += counts[j] * q ** j * (1.0 - q) ** (k - j)
    return 1.0 - total


def _balance_dominated(model: "CSPModel") -> bool:
    values = satisfaction_probability(model, BALANCE_GRID)
    centre = float(satisfaction_probability(model, 0.5))
    if bool(np.any(values > centre + BALANCE_TOL)):
        return False
    if model.sign_closed:
        return True
    k = model.arity
    counts = sum(w * phi.forbidden_by_weight() for phi, w in zip(model.members, model.weights))
    # d/dq of q^j (1-q)^(k-j) at 1/2 is (2j - k) / 2^(k-1)
    slope = -sum(counts[j] * (2 * j - k) for j in range(k + 1)) / 2.0 ** (k - 1)
    return bool(abs(slope) < BALANCE_TOL)


def validate_model(model: "CSPModel") -> PropertyReport:
    """Compute the five property flags by exhaustive checks."""
    if not model.members:
        raise InputError("empty model")
    k = model.arity
    per = [constraint_properties(phi) for phi in model.members]
    top = (1 << k) - 1
    if model.sign_closed:
        non_trivial = any(phi.n_forbidden > 0 for phi in model.members)
    else:
        non_trivial = (any(top in phi.forbidden for phi in model.members)
                       and any(0 in phi.forbidden for phi in model.members))
    return PropertyReport(
        non_trivial=bool(non_trivial),
        feasible=all(p["feasible"] for p in per),
        symmetric=all(p["symmetric"] for p in per),
        balance_dominated=bool(_balance_dominated(model)),
        one_essential=all(p["one_essential"] for p in per),
    )


@dataclass(frozen=True, eq=False)
class CSPModel:
    """A weighted family (Phi, p) of constraint functions of a common arity.

    With ``sign_closed`` the family is implicitly closed under sign flips:
    a draw picks a member by weight and then a uniform s in {-1,+1}^k and
    uses phi^s.  This keeps k-NAE-SAT usable at arities where its 2^(k-1)
    distinct members cannot be listed; :meth:`explicit` lists them when small.
    """

    arity: int
    members: tuple
    weights: tuple
    sign_closed: bool = False
    name: str = "custom"
    properties: PropertyReport = field(init=False, repr=False)

    def __post_init__(self):
        if not self.members:
            raise InputError("empty model")
        if len(self.members) != len(self.weights):
            raise InputError("members and weights differ in length")
        for phi in self.members:
            if phi.arity != self.arity:
                raise InputError(f"member of arity {phi.arity} in a model of arity {self.arity}")
        w = np.asarray(self.weights, dtype=float)
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise InputError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InputError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "weights", tuple(float(x) for x in w / w.sum()))
        object.__setattr__(self, "properties", validate_model(self))

    def require(self, *flags: str) -> None:
        missing = [f for f in (flags or PROPERTY_NAMES) if not getattr(self.properties, f)]
        if missing:
            raise DomainError(f"model {self.name!r} is not {', '.join(missing)}")

    def expect(self, fn) -> float:
        """E_phi[fn(phi)].  For sign-closed models fn must be flip-invariant."""
        return float(sum(w * fn(phi) for phi, w in zip(self.members, self.weights)))

    def explicit(self) -> "CSPModel":
        """The same distribution with every member listed (closure expanded)."""
        if not self.sign_closed:
            return self
        if self.arity > MAX_TABLE_ARITY or len(self.members) << self.arity > EXPLICIT_MEMBER_CAP:
            raise InputError(f"sign closure of arity {self.arity} is too large to list")
        members, weights = [], []
        for phi, w in zip(self.members, self.weights):
            images = []
            for mask in range(1 << self.arity):
                img = ConstraintFunction(self.arity, frozenset(i ^ mask for i in phi.forbidden))
                if img not in images:
                    images.append(img)
            members.extend(images)
            weights.extend([w / len(images)] * len(images))
        return CSPModel(self.arity, tuple(members), tuple(weights), False, self.name)

    @cached_property
    def tables(self) -> np.ndarray:
        """uint8 array (members, 2^k): 1 where the member is satisfied."""
        m = self.explicit()
        out = np.stack([phi.truth_table for phi in m.members]).astype(np.uint8)
        out.setflags(write=False)
        return out

    @cached_property
    def essential_tables(self) -> np.ndarray:
        """int8 array (members, 2^k): essential position, -1 if none, -2 if unsatisfied."""
        self.require("one_essential")
        k = self.arity
        t = self.tables.astype(bool)
        idx = np.arange(1 << k)
        out = np.full(t.shape, -1, dtype=np.int8)
        for i in range(k):
            ess = t & ~t[:, idx ^ position_bit(i, k)]
            out[ess] = i
        out[~t] = -2
        out.setflags(write=False)
        return out


# -- named models and construction ------------------------------------------

def build_distance_model(k: int, forbidden: Iterable[Sequence[int]], epsilon: float = 0.0,
                         close_under_sign_flips: bool = False, name: str = "distance") -> CSPModel:
    """Model whose constraint forbids J = I u -I for a well-separated I.

    Every x in I must have coordinate sum > epsilon*k and any two members of
    I must be at Hamming distance >= 3.  The resulting model is validated and
    a ConstructionError is raised when any of the five properties fails.
    """
    vectors = [check_signs(x, k) for x in forbidden]
    if not vectors:
        raise ConstructionError("I must be non-empty")
    for x in vectors:
        if not x.sum() > epsilon * k:
            raise ConstructionError(f"{x.tolist()} has coordinate sum {int(x.sum())} <= {epsilon}*{k}")
    for x, y in itertools.combinations(vectors, 2):
        d = int(np.sum(x != y))
        if d < 3:
            raise ConstructionError(f"{x.tolist()} and {y.tolist()} are at distance {d} < 3")
    top = (1 << k) - 1
    idx = {index_of(x) for x in vectors}
    phi = ConstraintFunction(k, frozenset(idx | {top ^ i for i in idx}))
    model = CSPModel(k, (phi,), (1.0,), close_under_sign_flips, name)
    if not model.properties.ok:
        raise ConstructionError(f"constructed model is not {', '.join(model.properties.missing())}")
    return model


def hypergraph_2col(k: int) -> CSPModel:
    return build_distance_model(k, [[1] * k], 0.0, False, name="2col")


def nae_sat(k: int) -> CSPModel:
    return build_distance_model(k, [[1] * k], 0.0, True, name="nae")


NAMED_MODELS = {"2col": hypergraph_2col, "nae": nae_sat}


def model_from_dict(data: dict) -> CSPModel:
    try:
        k = int(data["k"])
        members, weights = [], []
        for entry in data["constraints"]:
            members.append(ConstraintFunction.from_forbidden(k, entry["forbidden"]))
            weights.append(float(entry["weight"]))
        return CSPModel(k, tuple(members), tuple(weights), bool(data.get("sign_closed", False)),
                        str(data.get("name", "custom")))
    except (KeyError, TypeError, InputError) as exc:
        raise ConfigError(f"invalid model definition: {exc}") from exc


def model_to_dict(model: CSPModel) -> dict:
    return {
        "k": model.arity,
        "name": model.name,
        "sign_closed": model.sign_closed,
        "constraints": [
            {"forbidden": [vector_of(i, model.arity).tolist() for i in sorted(phi.forbidden)],
             "weight": w}
            for phi, w in zip(model.members, model.weights)
        ],
    }


def load_model(spec: str, k: int | None = None) -> CSPModel:
    """Resolve a built-in name ("2col", "nae") or a JSON model file."""
    if spec in NAMED_MODELS:
        if k is None:
            raise ConfigError(f"built-in model {spec!r} needs an arity")
        if k < 3:
            raise InputError(f"built-in models need k >= 3, got {k}")
        return NAMED_MODELS[spec](k)
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"{spec!r} is neither a built-in model nor a readable file")
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model file {spec!r}: {exc}") from exc
    model = model_from_dict(data)
    if k is not None and k != model.arity:
        raise ConfigError(f"--k {k} disagrees with the model file arity {model.arity}")
    return model
