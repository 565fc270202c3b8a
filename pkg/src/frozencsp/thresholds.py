"""Threshold constants: alpha_k, x_k, rho_k, density evolution, xi, r_f, r_p.

f_k(x) = x / (1 - e^{-x})^{k-1} has a single interior minimum x1 on
(0, inf) for k >= 3; alpha_k = f_k(x1).  Above alpha_k the equation
f_k(x) = alpha has a largest root x_k(alpha) on the increasing branch and
rho_k(alpha) = 1 - e^{-x_k(alpha)} is the limiting *-core fraction.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError, InputError
from .model import CSPModel, ConstraintFunction

ROOT_TOL = 1e-10
DEFAULT_GRID_STEPS = 10_000


def _check_k(k: int) -> int:
    if not isinstance(k, (int, np.integer)) or k < 3:
        raise InputError(f"k must be an integer >= 3, got {k!r}")
    return int(k)


def f_k(k: int, x):
    x = np.asarray(x, dtype=float)
    return x / (-np.expm1(-x)) ** (k - 1)


class AlphaK(NamedTuple):
    alpha: float
    minimizer: float


@lru_cache(maxsize=None)
def alpha_k(k: int) -> AlphaK:
    """inf_{x>0} x/(1-e^{-x})^{k-1} and the point where it is attained.

    Stationarity reduces to e^x - 1 = (k-1) x, whose positive root lies
    above ln(k-1) where the left side starts outgrowing the right.
    """
    k = _check_k(k)
    g = lambda x: math.expm1(x) - (k - 1) * x
    lo = math.log(k - 1)
    hi = 2.0 * lo + 1.0
    while g(hi) <= 0:
        hi *= 2.0
    x1 = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return AlphaK(float(f_k(k, x1)), float(x1))


def stationarity_residual(k: int, x: float) -> float:
    return abs(-math.expm1(-x) - (k - 1) * x * math.exp(-x))


def x_k(k: int, alpha: float) -> float:
    """Largest root of f_k(x) = alpha, by bisection on the increasing branch."""
    k = _check_k(k)
    a_k, x1 = alpha_k(k)
    if not alpha > a_k:
        raise DomainError(f"alpha={alpha!r} does not exceed alpha_{k}={a_k!r}")
    hi = max(2.0 * x1, 1.0)
    while f_k(k, hi) <= alpha:
        hi *= 2.0
    h = lambda x: float(f_k(k, x)) - alpha
    root = brentq(h, x1, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=1000)
    return float(root)


def rho_k(k: int, alpha: float) -> float:
    """Limiting *-core fraction: 0 below alpha_k, 1 - e^{-x_k(alpha)} above."""
    a_k, x1 = alpha_k(_check_k(k))
    if alpha < a_k:
        return 0.0
    if alpha == a_k:
        return -math.expm1(-x1)
    return -math.expm1(-x_k(k, alpha))


@dataclass(frozen=True)
class FixedPointTrace:
    k: int
    alpha: float
    rho_sequence: np.ndarray
    lambda_sequence: np.ndarray
    rho_limit: float
    lambda_limit: float
    gamma_margin: float
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.rho_sequence) - 1

    def rho(self, i: int) -> float:
        """rho_i, holding the last value once the iteration has stopped."""
        return float(self.rho_sequence[min(i, len(self.rho_sequence) - 1)])

    def lam(self, i: int) -> float:
        return float(self.lambda_sequence[min(i, len(self.lambda_sequence) - 1)])


def fixed_point_trace(k: int, alpha: float, tol: float = 1e-12,
                      max_iter: int = 1_000_000) -> FixedPointTrace:
    """Iterate rho_{i+1} = 1 - exp(-alpha rho_i^{k-1}) from rho_0 = 1."""
    k = _check_k(k)
    if not alpha > 0:
        raise InputError(f"alpha must be positive, got {alpha!r}")
    if not tol > 0:
        raise InputError(f"tol must be positive, got {tol!r}")
    rhos = [1.0]
    lams = []
    converged = False
    rho = 1.0
    for _ in range(max_iter):
        lam = alpha * rho ** (k - 1)
        nxt = -math.expm1(-lam)
        lams.append(lam)
        rhos.append(nxt)
        step = rho - nxt
        rho = nxt
        if abs(step) < tol:
            converged = True
            break
    lam = alpha * rho ** (k - 1)
    lams.append(lam)
    if rho > 10 * tol:
        gamma = 1.0 - (k - 1) * lam * math.exp(-lam) / rho
    else:
        gamma = math.nan
    return FixedPointTrace(k, float(alpha), np.array(rhos), np.array(lams), rho, lam, gamma, converged)


# -- model constants ---------------------------------------------------------

def omega_f(m: CSPModel) -> float:
    return m.expect(lambda phi: phi.n_forbidden) / m.expect(lambda phi: phi.n_satisfying)


def omega_p(m: CSPModel) -> float:
    return m.expect(lambda phi: phi.n_forbidden / phi.n_satisfying)


def xi(m: CSPModel) -> float:
    """k E|I| / E|S|: limiting fraction of planted clauses with an essential variable."""
    m.require("feasible", "one_essential")
    return m.arity * omega_f(m)


def lambda_(m: CSPModel, r: float) -> float:
    """Limiting fraction of variables in the *-core at clause density r."""
    return rho_k(m.arity, xi(m) * r)


def r_sat(m: CSPModel) -> float:
    return math.log(2.0) / m.expect(lambda phi: math.log1p(phi.n_forbidden / phi.n_satisfying))


def _check_theta(theta):
    t = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > 1):
        raise InputError("theta must lie in [0, 1]")
    return t


def _tail_sum(phi: ConstraintFunction, theta: np.ndarray) -> np.ndarray:
    w = phi.degree_weights.copy()
    w[0] = 0.0
    return np.polyval(w[::-1], theta)


def p_phi_poly(phi: ConstraintFunction, theta):
    """p_phi(theta) = sum_Q (phi_Q/phi_empty)^2 theta^|Q|."""
    t = _check_theta(theta)
    out = 1.0 + _tail_sum(phi, t)
    return float(out) if out.ndim == 0 else out


def log_p_phi(phi: ConstraintFunction, theta):
    t = _check_theta(theta)
    out = np.log1p(_tail_sum(phi, t))
    return float(out) if out.ndim == 0 else out


def expected_log_p(m: CSPModel, theta):
    t = _check_theta(theta)
    return sum(w * np.log1p(_tail_sum(phi, t)) for phi, w in zip(m.members, m.weights))


def binary_entropy(theta):
    """H(theta) = -((1+t)/2) ln(1+t) - ((1-t)/2) ln(1-t); nonpositive."""
    t = _check_theta(theta)
    # (1+t)ln(1+t) + (1-t)ln(1-t) = ln(1-t^2) + 2t atanh(t), free of cancellation near 0
    inner = t < 1.0
    ti = np.where(inner, t, 0.0)
    with np.errstate(divide="ignore"):
        s = np.log1p(-ti * ti) + 2.0 * ti * np.arctanh(ti)
    out = np.where(inner, -0.5 * s, -math.log(2.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RpResult:
    value: float
    theta: float
    source: str  # "limit0", "grid" or "limit1"


def r_p_search(m: CSPModel, grid_steps: int = DEFAULT_GRID_STEPS) -> RpResult:
    m.require("symmetric", "feasible", "balance_dominated", "non_trivial")
    if grid_steps < 2:
        raise InputError("grid_steps must be at least 2")
    theta = np.arange(1, grid_steps) / grid_steps
    denom = expected_log_p(m, theta)
    if np.all(denom == 0):
        raise DomainError("E[ln p_phi(theta)] vanishes on the whole grid: degenerate model")
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(denom > 0, -binary_entropy(theta) / denom, np.inf)
    j = int(np.argmin(g))
    best = RpResult(float(g[j]), float(theta[j]), "grid")

    def obj(t):
        d = float(expected_log_p(m, t))
        return -binary_entropy(t) / d if d > 0 else np.inf

    lo = theta[max(j - 1, 0)]
    hi = theta[min(j + 1, len(theta) - 1)]
    if hi > lo:
        res = minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        if res.fun < best.value:
            best = RpResult(float(res.fun), float(res.x), "grid")

    w2 = m.expect(lambda phi: phi.degree_weights[2]) if m.arity >= 2 else 0.0
    if w2 > 0:
        limit0 = 0.5 / w2
        if limit0 <= best.value:
            best = RpResult(limit0, 0.0, "limit0")
    limit1 = r_sat(m)
    if limit1 < best.value:
        best = RpResult(limit1, 1.0, "limit1")
    return best


def r_p(m: CSPModel, grid_steps: int = DEFAULT_GRID_STEPS) -> float:
    """inf over (0,1) of -H(theta) / E ln p_phi(theta), both endpoint limits included."""
    return r_p_search(m, grid_steps).value


def ratio_bound(k: int) -> float:
    """Upper bound on r_f/r_p: 8 ln k / (k (1 - 1/(C(k,2)+1)) (1 - 1/k^2)^{k-1})."""
    return 8 * math.log(k) / (k * (1 - 1 / (math.comb(k, 2) + 1)) * (1 - 1 / k ** 2) ** (k - 1))


@dataclass(frozen=True)
class ThresholdReport:
    k: int
    alpha_k: float
    xi: float
    omega_f: float
    omega_p: float
    r_f: float
    r_p: float
    r_p_lower_bound: float
    r_sat_reference: float

    def as_dict(self) -> dict:
        return asdict(self)


def threshold_report(m: CSPModel, grid_steps: int = DEFAULT_GRID_STEPS) -> ThresholdReport:
    m.require()
    a = alpha_k(m.arity).alpha
    x = xi(m)
    op = omega_p(m)
    return ThresholdReport(
        k=m.arity, alpha_k=a, xi=x, omega_f=omega_f(m), omega_p=op,
        r_f=a / x, r_p=r_p(m, grid_steps), r_p_lower_bound=0.25 / op,
        r_sat_reference=r_sat(m),
    )
