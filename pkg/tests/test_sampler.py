import itertools
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from frozencsp.core import build_gamma
from frozencsp.errors import CheckFailure, InputError, SamplingError, ScaleError
from frozencsp.model import hypergraph_2col, nae_sat
from frozencsp.sampler import (CSPInstance, derive_seed, enumerate_solutions, mask_to_sigma,
                               random_tuples, read_instance, sample_csp, sample_essential_model,
                               sample_model_a, sample_planted, sample_uniform_small,
                               sigma_to_mask, type_counts, type_weights, write_instance)

from oracles import essential_pairs


def chi2_pvalue(observed, expected):
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    keep = expected > 0
    stat = np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep])
    return stats.chi2.sf(stat, keep.sum() - 1)


class TestSeeds:
    def test_derive_seed_stable(self):
        assert derive_seed(7, 3) == derive_seed(7, 3)
        assert derive_seed(7, 3) != derive_seed(7, 4)
        assert derive_seed(7, 3) != derive_seed(8, 3)

    def test_random_tuples_distinct(self):
        rng = np.random.default_rng(0)
        for n in (3, 5, 50, 10_000):
            t = random_tuples(rng, n, 3, 500)
            assert t.shape == (500, 3)
            assert np.all(np.sort(t, axis=1)[:, 1:] != np.sort(t, axis=1)[:, :-1])
            assert t.min() >= 0 and t.max() < n


class TestCSP:
    def test_empty(self, col3):
        F = sample_csp(col3, 10, 0, 1)
        assert F.M == 0
        assert F.satisfied(col3, np.ones(10)).shape == (0,)

    def test_deterministic(self, nae3):
        assert sample_csp(nae3, 50, 100, 9) == sample_csp(nae3, 50, 100, 9)
        assert not sample_csp(nae3, 50, 100, 9) == sample_csp(nae3, 50, 100, 10)

    def test_n_less_than_k(self, col3):
        with pytest.raises(InputError):
            sample_csp(col3, 2, 1, 0)

    def test_member_frequencies(self, nae3):
        F = sample_csp(nae3, 10_000, 10_000, 3)
        counts = np.bincount(F.members, minlength=4)
        assert chi2_pvalue(counts, np.full(4, 2500.0)) > 1e-3
        sd = np.sqrt(10_000 * 0.25 * 0.75)
        assert np.all(np.abs(counts - 2500) < 3 * sd + 1)

    def test_tuple_positions_uniform(self, col3):
        F = sample_csp(col3, 20, 20_000, 4)
        counts = np.bincount(F.tuples.ravel(), minlength=20)
        assert chi2_pvalue(counts, np.full(20, 3000.0)) > 1e-3


class TestPlanted:
    def test_satisfies(self, col4, nae3):
        for m in (col4, nae3):
            P = sample_planted(m, 200, 600, 5)
            assert P.instance.satisfied(m.explicit(), P.sigma).all()

    def test_deterministic(self, col3):
        a, b = sample_planted(col3, 100, 300, 2), sample_planted(col3, 100, 300, 2)
        assert a.instance == b.instance
        assert np.array_equal(a.sigma, b.sigma)

    def test_impossible_sigma_fails_fast(self, col3):
        outcomes = Counter()
        for seed in range(40):
            try:
                P = sample_planted(col3, 3, 1, seed)
                outcomes["ok"] += 1
                assert abs(int(P.sigma.sum())) == 1
            except SamplingError:
                outcomes["fail"] += 1
        assert outcomes["ok"] and outcomes["fail"]

    def test_tiny_n3_uniform_orderings(self, col3):
        # given a non-constant sigma every ordering of (0,1,2) satisfies 2-col
        counts = Counter()
        seed = 0
        while sum(counts.values()) < 6000:
            seed += 1
            try:
                P = sample_planted(col3, 3, 1, seed)
            except SamplingError:
                continue
            counts[tuple(P.instance.tuples[0])] += 1
        perms = list(itertools.permutations(range(3)))
        assert set(counts) == set(perms)
        assert chi2_pvalue([counts[p] for p in perms], np.full(6, 1000.0)) > 1e-3

    def test_tiny_n4_conditional_distribution(self, col3):
        groups = {}
        for seed in range(12_000):
            try:
                P = sample_planted(col3, 4, 1, seed)
            except SamplingError:
                continue
            groups.setdefault(tuple(P.sigma), Counter())[tuple(P.instance.tuples[0])] += 1
        stat = dof = 0
        phi = col3.members[0]
        for sigma, cnt in groups.items():
            support = [t for t in itertools.permutations(range(4), 3)
                       if phi(tuple(int(sigma[v]) for v in t))]
            assert set(cnt) <= set(support)
            total = sum(cnt.values())
            exp = total / len(support)
            stat += sum((cnt[t] - exp) ** 2 / exp for t in support)
            dof += len(support) - 1
        assert stats.chi2.sf(stat, dof) > 1e-3

    def test_essential_fraction_k3_exact(self, col3):
        P = sample_planted(col3, 10_000, 20_000, 11)
        g = build_gamma(P.instance, P.sigma, col3)
        assert g.n_edges == 20_000


class TestUniformSmall:
    def test_m0_uniform(self, col3):
        masks = [sigma_to_mask(sample_uniform_small(col3, 4, 0, s).sigma) for s in range(3200)]
        assert chi2_pvalue(np.bincount(masks, minlength=16), np.full(16, 200.0)) > 1e-3

    def test_uniform_over_solutions(self, col3):
        # fixed instance: draw the seed that reproduces it, then compare sigma frequencies
        seen = Counter()
        support = None
        for s in range(20_000):
            d = sample_uniform_small(col3, 4, 1, s)
            if tuple(d.instance.tuples[0]) != (0, 1, 2):
                continue
            if support is None:
                support = set(enumerate_solutions(d.instance, col3).tolist())
            assert d.instance.satisfied(col3, d.sigma).all()
            seen[sigma_to_mask(d.sigma)] += 1
        assert set(seen) == support and len(support) == 12
        total = sum(seen.values())
        assert chi2_pvalue([seen[x] for x in sorted(support)], np.full(12, total / 12)) > 1e-3

    def test_scale_cap(self, col3):
        with pytest.raises(ScaleError):
            sample_uniform_small(col3, 25, 1, 0)

    def test_enumeration_matches_bruteforce(self, col3):
        F = sample_csp(col3, 9, 12, 8)
        brute = [x for x in range(1 << 9) if F.satisfied(col3, mask_to_sigma(x, 9)).all()]
        assert enumerate_solutions(F, col3).tolist() == brute

    def test_mask_roundtrip(self):
        for x in (0, 1, 5, 1023):
            assert sigma_to_mask(mask_to_sigma(x, 10)) == x


class TestTypeWeights:
    def test_counts_match_essential_pairs(self, col4):
        phi = col4.members[0]
        direct = Counter()
        for y, i in essential_pairs(phi):
            a = sum(1 for j, v in enumerate(y) if j != i and v > 0)
            direct[(y[i], a)] += 1
        tc = type_counts(col4)
        for key, val in tc.items():
            assert val == pytest.approx(direct.get(key, 0))

    def test_sign_closed_counts_match_explicit(self):
        m = nae_sat(4)
        a, b = type_counts(m), type_counts(m.explicit())
        for key in a:
            assert a[key] == pytest.approx(b[key])

    def test_symmetry_at_balance(self, col4, nae3):
        for m in (col4, nae3, hypergraph_2col(5)):
            tw = type_weights(m, 500, 500)
            tp, wp = tw.conditional(1)
            tm, wm = tw.conditional(-1)
            lookup = {(a, b): w for (_, a, b), w in zip(tm, wm)}
            for (_, a, b), w in zip(tp, wp):
                assert w == pytest.approx(lookup[(b, a)], abs=1e-14)

    def test_essential_probability_limit(self, col4):
        tw = type_weights(col4, 50_000, 50_000)
        assert tw.essential_probability == pytest.approx(4 / 7, abs=1e-3)

    def test_model_a_type_frequencies(self, col4):
        g = sample_model_a(col4, 2000, 40_000, 13, thin=False)
        g.check()
        n_plus = int((g.signs > 0).sum())
        tw = type_weights(col4, n_plus, 2000 - n_plus)
        types = g.types
        E = g.n_edges
        for t, w in zip(tw.types, tw.weights):
            obs = int(np.all(types == t, axis=1).sum())
            sd = np.sqrt(E * w * (1 - w))
            assert abs(obs - E * w) <= 3 * sd + 1

    def test_model_a_sign_split(self, col4):
        g = sample_model_a(col4, 2000, 40_000, 14, thin=False)
        plus = int((g.signs[g.essential] > 0).sum())
        E = g.n_edges
        assert abs(plus - E / 2) <= 3 * np.sqrt(E) / 2 + 0.02 * E

    def test_model_a_one_essential_per_edge(self, col4):
        g = sample_model_a(col4, 300, 500, 1)
        assert np.all(g.edges[:, 0] == g.essential)
        assert g.essential.shape[0] == g.n_edges

    def test_model_a_deterministic(self, col4):
        a, b = sample_model_a(col4, 300, 500, 1), sample_model_a(col4, 300, 500, 1)
        assert np.array_equal(a.edges, b.edges) and np.array_equal(a.signs, b.signs)

    def test_model_a_matches_planted_gamma(self, col4):
        n, M, trials = 300, 300, 300
        pl_edges, a_edges = [], []
        pl_types, a_types = Counter(), Counter()
        for t in range(trials):
            P = sample_planted(col4, n, M, derive_seed(1, t))
            g = build_gamma(P.instance, P.sigma, col4)
            pl_edges.append(g.n_edges)
            pl_types.update(map(tuple, g.types.tolist()))
            h = sample_model_a(col4, n, M, derive_seed(2, t))
            a_edges.append(h.n_edges)
            a_types.update(map(tuple, h.types.tolist()))
        assert stats.ttest_ind(pl_edges, a_edges).pvalue > 1e-3
        keys = sorted(set(pl_types) | set(a_types))
        table = np.array([[pl_types[k] for k in keys], [a_types[k] for k in keys]])
        table = table[:, table.sum(axis=0) > 0]
        assert stats.chi2_contingency(table)[1] > 1e-3

    def test_essential_model(self, col4):
        rng = np.random.default_rng(0)
        n = 1000
        signs = np.where(np.arange(n) < n // 2, 1, -1)
        ess = rng.integers(0, n, size=20_000)
        g = sample_essential_model(signs, ess, col4, 5)
        g.check()
        assert np.array_equal(g.essential, ess)
        tw = type_weights(col4, n // 2, n // 2)
        tp, wp = tw.conditional(1)
        g_val = float(np.sum(tp[:, 1] * wp))
        sel = signs[ess] > 0
        a_counts = g.types[sel, 1]
        se = a_counts.std() / np.sqrt(sel.sum())
        assert abs(a_counts.mean() - g_val) < 3 * se + 1e-9
        assert np.all(g.types[:, 0] == signs[ess])


class TestFiles:
    def test_roundtrip(self, tmp_path, col3):
        P = sample_planted(col3, 30, 40, 3)
        p = tmp_path / "f.txt"
        write_instance(p, P.instance, P.sigma)
        F, sigma = read_instance(p)
        assert F == P.instance
        assert np.array_equal(sigma, P.sigma)
        first = p.read_text().split("\n")[1].split()
        assert int(first[0]) == int(P.instance.members[0])
        assert [int(v) - 1 for v in first[1:]] == P.instance.tuples[0].tolist()

    def test_no_sigma(self, tmp_path, col3):
        F = sample_csp(col3, 10, 5, 0)
        p = tmp_path / "f.txt"
        write_instance(p, F)
        G, sigma = read_instance(p)
        assert G == F and sigma is None

    def test_malformed(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("3 2 3 x\n0 1 2 3\n")
        with pytest.raises(InputError):
            read_instance(p)

    def test_instance_validates(self):
        with pytest.raises(InputError):
            CSPInstance(3, 3, np.array([0]), np.array([[0, 0, 1]]))
