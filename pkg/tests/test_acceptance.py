"""Acceptance criteria 1-9, one PASS/FAIL line each; 10 is informational.

Run with pytest (lines appear in the terminal summary) or directly:
``python tests/test_acceptance.py``.
"""
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from frozencsp.cli import main as cli_main  # noqa: E402
from frozencsp.core import build_gamma, core_stats, parallel_rounds, peel_star_core  # noqa: E402
from frozencsp.freeze import (chain_is_acyclic, closure, decompose_flippable,  # noqa: E402
                              exact_frozen_set, is_flippable, symmetric_difference_flippable)
from frozencsp.model import hypergraph_2col, nae_sat  # noqa: E402
from frozencsp.sampler import (derive_seed, enumerate_solutions, mask_to_sigma,  # noqa: E402
                               sample_planted, sample_uniform_small, sigma_to_mask)
from frozencsp.thresholds import (alpha_k, f_k, fixed_point_trace, omega_p, r_p,  # noqa: E402
                                  stationarity_residual, threshold_report, x_k)

from oracles import RHO_3_AT_3, closure_bruteforce  # noqa: E402

RESULTS = {}
N_LARGE = 100_000


def record(num, ok, detail):
    RESULTS[num] = (bool(ok), detail)
    return ok


def report_lines():
    lines = []
    for num in sorted(RESULTS):
        ok, detail = RESULTS[num]
        lines.append(f"criterion {num}: {'PASS' if ok else 'FAIL'} ({detail})")
    lines.append("criterion 10: INFO (high-probability freezing at large n is not checked at desk "
                 "scale; criteria 4-7 cover the constants and predicates it rests on)")
    return lines


def alpha_grid(k):
    a = alpha_k(k).alpha
    return (a + 0.1, a + 1.0, 2 * a)


# -- 1 -----------------------------------------------------------------------

def criterion_1():
    worst_stat = worst_root = 0.0
    for k in range(3, 11):
        a, x1 = alpha_k(k)
        worst_stat = max(worst_stat, stationarity_residual(k, x1))
        for alpha in alpha_grid(k):
            worst_root = max(worst_root, abs(float(f_k(k, x_k(k, alpha))) - alpha))
    ok = worst_stat < 1e-10 and worst_root < 1e-10
    return record(1, ok, f"max stationarity residual {worst_stat:.2e}, max |f(x_k)-alpha| {worst_root:.2e}")


# -- 2 -----------------------------------------------------------------------

def criterion_2():
    worst = 0.0
    for k in range(3, 11):
        for alpha in alpha_grid(k):
            tr = fixed_point_trace(k, alpha)
            worst = max(worst, abs(tr.rho_limit - (1 - math.exp(-x_k(k, alpha)))))
    return record(2, worst < 1e-6, f"max |rho_limit - (1-e^-x_k)| {worst:.2e}")


# -- 3 -----------------------------------------------------------------------

def criterion_3():
    m3, m4 = hypergraph_2col(3), hypergraph_2col(4)
    P = sample_planted(m3, N_LARGE, 3 * N_LARGE, derive_seed(3, 0))
    frac3 = build_gamma(P.instance, P.sigma, m3).n_edges / P.instance.M
    fracs = []
    for t in range(10):
        P = sample_planted(m4, N_LARGE, N_LARGE, derive_seed(3, t + 1))
        fracs.append(build_gamma(P.instance, P.sigma, m4).n_edges / N_LARGE)
    dev = max(abs(f - 4 / 7) for f in fracs)
    ok = frac3 == 1.0 and dev <= 0.01
    return record(3, ok, f"k=3 fraction {frac3}, k=4 max |fraction - 4/7| {dev:.4f} over 10 trials")


# -- 4 and 6 share the r = 3 runs ----------------------------------------------

_R3_RUNS = []


def r3_runs():
    if not _R3_RUNS:
        m = hypergraph_2col(3)
        for t in range(20):
            P = sample_planted(m, N_LARGE, 3 * N_LARGE, derive_seed(4, t))
            core, _ = peel_star_core(build_gamma(P.instance, P.sigma, m))
            _R3_RUNS.append(core_stats(core))
    return _R3_RUNS


def criterion_4():
    fr3 = [s.core_vertices / N_LARGE for s in r3_runs()]
    m = hypergraph_2col(3)
    fr2 = []
    for t in range(5):
        P = sample_planted(m, N_LARGE, 2 * N_LARGE, derive_seed(5, t))
        core, _ = peel_star_core(build_gamma(P.instance, P.sigma, m))
        fr2.append(core.vertices.size / N_LARGE)
    dev = max(abs(f - RHO_3_AT_3) for f in fr3)
    ok = dev <= 0.01 and max(fr2) < 0.01
    return record(4, ok, f"r=3: mean {np.mean(fr3):.4f} vs {RHO_3_AT_3:.4f}, max dev {dev:.4f}; "
                         f"r=2: max {max(fr2):.4f}")


def criterion_6():
    gamma = fixed_point_trace(3, 3.0).gamma_margin
    ratios = [s.branching_ratio for s in r3_runs()]
    bound = 1 - gamma / 2
    return record(6, max(ratios) < bound,
                  f"max (k-1)|H1|/|V| {max(ratios):.4f} < 1 - gamma/2 = {bound:.4f}")


# -- 5 -----------------------------------------------------------------------

def criterion_5():
    m = hypergraph_2col(3)
    P = sample_planted(m, N_LARGE, 3 * N_LARGE, derive_seed(6, 0))
    _, trace = parallel_rounds(build_gamma(P.instance, P.sigma, m), 6)
    tr = fixed_point_trace(3, 3.0)
    worst = 0.0
    for i in range(6):
        rho, lam = tr.rho(i), tr.lam(i)
        for col in ("X_plus", "X_minus"):
            worst = max(worst, abs(trace.stat(col)[i] / N_LARGE - rho / 2))
        for col in ("B_plus", "B_minus"):
            worst = max(worst, abs(trace.stat(col)[i] / N_LARGE - lam * math.exp(-lam) / 2))
    return record(5, worst <= 0.01, f"rounds 0-5, max deviation {worst:.4f}")


# -- 7 -----------------------------------------------------------------------

def random_flippable(core, rng):
    g = core.gamma
    S = {int(v) for v in core.vertices if rng.random() < 0.3}
    while True:
        bad = None
        for e in core.edge_ids:
            x = int(g.essential[e])
            others = [int(u) for u in g.edges[e] if u != x]
            if x in S and not set(others) & S:
                bad = others
                break
        if bad is None:
            return S
        S.add(int(rng.choice(bad)))


def criterion_7():
    m = hypergraph_2col(3)
    rng = np.random.default_rng(7)
    counts = dict(instances=0, pairs=0, unions=0, closures=0, decomps=0, peeled=0)
    fails = []
    pool = []
    for t in range(200):
        n = int(rng.integers(10, 16))
        M = int(round(float(rng.uniform(1.6, 2.4)) * n))
        d = sample_uniform_small(m, n, M, derive_seed(7, t))
        F = d.instance
        sols = enumerate_solutions(F, m)
        counts["instances"] += 1
        # (a) every ordered solution pair
        for base in sols:
            sigma = mask_to_sigma(int(base), n)
            core, _ = parallel_rounds(build_gamma(F, sigma, m))
            if not symmetric_difference_flippable(core, sigma, sols).all():
                fails.append(f"a:{t}")
            counts["pairs"] += sols.size
        g = build_gamma(F, d.sigma, m)
        core, trace = parallel_rounds(g)
        if core.vertices.size:
            verts = core.vertices.tolist()
            sets = []
            base_mask = sigma_to_mask(d.sigma)
            diff = [{v for v in verts if (int(s) ^ base_mask) >> v & 1} for s in sols[:20]]
            sets += [S for S in diff if S]
            sets += [random_flippable(core, rng) for _ in range(3)]
            pool.append((core, sets))
            # (c)
            for _ in range(5):
                A = {v for v in verts if rng.random() < 0.25}
                counts["closures"] += 1
                if closure(core, A) != closure_bruteforce(core, A):
                    fails.append(f"c:{t}")
            # (d)
            for S in sets:
                counts["decomps"] += 1
                if not is_flippable(core, S):
                    fails.append(f"d-flip:{t}")
                    continue
                try:
                    decompose_flippable(core, S, check=True)
                except AssertionError:
                    fails.append(f"d:{t}")
        # (e)
        fz = exact_frozen_set(F, d.sigma, 1, m, sols)
        death = trace.removal_round
        for x in np.flatnonzero(death >= 0):
            if chain_is_acyclic(F, g, death, int(x)):
                counts["peeled"] += 1
                if int(x) in fz:
                    fails.append(f"e:{t}:{x}")
    # (b) 100 random pairs of flippable sets drawn from the same core
    cores = [(c, s) for c, s in pool if len(s) >= 2]
    for j in range(100):
        core, sets = cores[j % len(cores)]
        a, b = rng.choice(len(sets), size=2, replace=False)
        counts["unions"] += 1
        if not is_flippable(core, sets[a] | sets[b]):
            fails.append(f"b:{j}")
    ok = not fails and counts["unions"] == 100 and counts["decomps"] > 0
    detail = ", ".join(f"{k} {v}" for k, v in counts.items())
    if fails:
        detail += f"; failures {fails[:5]}"
    return record(7, ok, detail)


# -- 8 -----------------------------------------------------------------------

def criterion_8():
    worst = math.inf
    for k in range(3, 13):
        for m in (hypergraph_2col(k), nae_sat(k)):
            worst = min(worst, r_p(m) * omega_p(m) / 0.25)
    ratios = []
    for k in range(27, 36):
        for m in (hypergraph_2col(k), nae_sat(k)):
            rep = threshold_report(m)
            ratios.append(rep.r_f / rep.r_p)
    ok = worst >= 1.0 and max(ratios) < 1.0
    return record(8, ok, f"min r_p / (0.25/Omega_p) over k=3..12 is {worst:.3f}; "
                         f"max r_f/r_p over k=27..35 is {max(ratios):.3f}")


# -- 9 -----------------------------------------------------------------------

def criterion_9(tmp_dir):
    runs = {
        "sample": ["sample", "--k", "4", "--n", "500", "--r", "2", "--planted"],
        "core-scan": ["core-scan", "--k", "3", "--n", "20000", "--r", "3", "--trials", "3"],
        "freeze-scan": ["freeze-scan", "--k", "3", "--n", "12", "--r", "2", "--trials", "3",
                        "--ell", "1,2"],
        "greedy-solve": ["greedy-solve", "--k", "3", "--n", "300", "--r-grid", "0.8,1.2",
                         "--trials", "2"],
    }
    same = []
    for name, argv in runs.items():
        blobs = []
        for rep in range(2):
            out = os.path.join(tmp_dir, f"{name}-{rep}.out")
            with open(os.devnull, "w") as sink:
                old = sys.stdout
                sys.stdout = sink
                try:
                    code = cli_main(argv + ["--seed", "2024", "--out", out])
                finally:
                    sys.stdout = old
            if code != 0:
                blobs.append(None)
                continue
            with open(out, "rb") as fh:
                blobs.append(fh.read())
        same.append(blobs[0] is not None and blobs[0] == blobs[1])
    return record(9, all(same), f"{sum(same)}/{len(same)} stochastic commands byte-identical")


# -- pytest wrappers -----------------------------------------------------------

def test_criterion_1_threshold_self_consistency():
    assert criterion_1(), RESULTS[1][1]


def test_criterion_2_fixed_point_vs_root():
    assert criterion_2(), RESULTS[2][1]


def test_criterion_3_essential_fraction():
    assert criterion_3(), RESULTS[3][1]


def test_criterion_4_core_size():
    assert criterion_4(), RESULTS[4][1]


def test_criterion_5_density_evolution():
    assert criterion_5(), RESULTS[5][1]


def test_criterion_6_branching_bound():
    assert criterion_6(), RESULTS[6][1]


def test_criterion_7_exact_oracle_suite():
    assert criterion_7(), RESULTS[7][1]


def test_criterion_8_r_p_bounds():
    assert criterion_8(), RESULTS[8][1]


def test_criterion_9_determinism(tmp_path):
    assert criterion_9(str(tmp_path)), RESULTS[9][1]


if __name__ == "__main__":
    import tempfile

    for fn in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
               criterion_7, criterion_8):
        fn()
    with tempfile.TemporaryDirectory() as tmp:
        criterion_9(tmp)
    print("\n".join(report_lines()))
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
