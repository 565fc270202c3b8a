import math

import numpy as np
import pytest

from frozencsp.errors import DomainError, InputError
from frozencsp.model import CSPModel, ConstraintFunction, hypergraph_2col, nae_sat
from frozencsp.thresholds import (alpha_k, binary_entropy, expected_log_p, f_k,
                                  fixed_point_trace, lambda_, omega_f, omega_p, p_phi_poly,
                                  r_p, r_p_search, r_sat, ratio_bound, rho_k,
                                  stationarity_residual, threshold_report, x_k, xi)

from oracles import ALPHA_3, RHO_3_AT_3, X1_3, X_3_AT_3, alpha_oracle, iterate_rho


class TestAlpha:
    def test_k3_frozen(self):
        a, x1 = alpha_k(3)
        assert a == pytest.approx(ALPHA_3, abs=1e-9)
        assert x1 == pytest.approx(X1_3, abs=1e-6)
        assert math.exp(x1) == pytest.approx(1 + 2 * x1, abs=1e-12)
        assert float(f_k(3, x1)) == pytest.approx(a, abs=1e-10)

    @pytest.mark.parametrize("k", range(3, 11))
    def test_matches_grid_oracle(self, k):
        a, x1 = alpha_k(k)
        ao, xo = alpha_oracle(k)
        assert a == pytest.approx(ao, abs=1e-9)
        assert x1 == pytest.approx(xo, abs=1e-5)
        assert stationarity_residual(k, x1) < 1e-10

    @pytest.mark.parametrize("k", [2, 1, 0, 3.5])
    def test_bad_k(self, k):
        with pytest.raises(InputError):
            alpha_k(k)

    @pytest.mark.parametrize("k", range(3, 11))
    def test_local_minimum(self, k):
        a, x1 = alpha_k(k)
        assert float(f_k(k, x1 - 0.1)) > a and float(f_k(k, x1 + 0.1)) > a

    def test_increasing_in_k(self):
        vals = [alpha_k(k).alpha for k in range(3, 15)]
        assert all(a < b for a, b in zip(vals, vals[1:]))


class TestXk:
    def test_k3_at_3(self):
        x = x_k(3, 3.0)
        assert x == pytest.approx(X_3_AT_3, abs=1e-9)
        assert float(f_k(3, 2.56)) == pytest.approx(3.0, abs=0.02)
        assert float(f_k(3, x)) == pytest.approx(3.0, abs=1e-10)

    def test_near_alpha_k(self):
        a, x1 = alpha_k(3)
        assert x_k(3, a + 1e-9) == pytest.approx(x1, abs=1e-3)

    def test_domain(self):
        a, _ = alpha_k(3)
        with pytest.raises(DomainError):
            x_k(3, a)
        with pytest.raises(DomainError):
            x_k(3, 2.0)

    @pytest.mark.parametrize("k", range(3, 11))
    def test_self_consistent(self, k):
        a, x1 = alpha_k(k)
        for alpha in (a + 0.1, a + 1, 2 * a):
            x = x_k(k, alpha)
            assert x >= x1
            assert float(f_k(k, x)) == pytest.approx(alpha, abs=1e-10)

    def test_rho_below_and_above(self):
        assert rho_k(3, 2.0) == 0.0
        assert rho_k(3, 3.0) == pytest.approx(RHO_3_AT_3, abs=1e-10)


class TestFixedPoint:
    def test_k3_at_3(self):
        tr = fixed_point_trace(3, 3.0)
        assert tr.converged
        assert tr.rho_limit == pytest.approx(RHO_3_AT_3, abs=1e-6)
        assert tr.rho_limit == pytest.approx(iterate_rho(3, 3.0), abs=1e-9)
        assert tr.gamma_margin > 0
        assert tr.rho(0) == 1.0
        assert tr.lam(0) == 3.0

    @pytest.mark.parametrize("k,alpha", [(3, 3.0), (4, 5.0), (5, 1.0)])
    def test_first_step(self, k, alpha):
        assert fixed_point_trace(k, alpha).rho(1) == pytest.approx(1 - math.exp(-alpha))

    @pytest.mark.parametrize("k", range(3, 9))
    def test_margin_inequality(self, k):
        a, _ = alpha_k(k)
        for alpha in (a + 0.1, a + 1, 2 * a):
            tr = fixed_point_trace(k, alpha)
            lam, rho = tr.lambda_limit, tr.rho_limit
            assert tr.gamma_margin > 0
            assert lam * math.exp(-lam) < (1 - tr.gamma_margin) * rho / (k - 1) + 1e-12

    def test_collapse(self):
        tr = fixed_point_trace(3, 2.0)
        assert tr.rho_limit < 1e-10
        assert math.isnan(tr.gamma_margin)

    def test_monotone_decreasing(self):
        tr = fixed_point_trace(4, 6.0)
        assert np.all(np.diff(tr.rho_sequence) <= 0)
        assert tr.rho(10 ** 9) == tr.rho_limit

    @pytest.mark.parametrize("k", range(3, 11))
    def test_limit_matches_root(self, k):
        a, _ = alpha_k(k)
        for alpha in (a + 0.1, a + 1, 2 * a):
            tr = fixed_point_trace(k, alpha)
            assert abs(tr.rho_limit - (1 - math.exp(-x_k(k, alpha)))) < 1e-6

    def test_bad_inputs(self):
        with pytest.raises(InputError):
            fixed_point_trace(3, -1.0)
        with pytest.raises(InputError):
            fixed_point_trace(3, 3.0, tol=0)


class TestModelConstants:
    def test_xi(self, col3, col4, nae3):
        assert xi(col3) == pytest.approx(1.0)
        assert xi(col4) == pytest.approx(4 / 7)
        assert xi(nae3) == pytest.approx(1.0)

    def test_xi_needs_one_essential(self):
        phi = ConstraintFunction.from_truth_table([bin(i).count("1") % 2 for i in range(8)])
        with pytest.raises(DomainError):
            xi(CSPModel(3, (phi,), (1.0,)))

    def test_omegas(self, col3):
        assert omega_f(col3) == pytest.approx(2 / 6)
        assert omega_p(col3) == pytest.approx(2 / 6)

    def test_lambda(self, col3):
        assert lambda_(col3, 3.0) == pytest.approx(RHO_3_AT_3, abs=1e-10)
        assert lambda_(col3, 2.0) == 0.0

    def test_r_sat(self, col3):
        assert r_sat(col3) == pytest.approx(math.log(2) / math.log(4 / 3))


class TestPolynomials:
    def test_endpoints(self, col3, col4):
        for m in (col3, col4):
            phi = m.members[0]
            assert p_phi_poly(phi, 0.0) == 1.0
            assert p_phi_poly(phi, 1.0) == pytest.approx(1 + phi.n_forbidden / phi.n_satisfying)

    def test_2col_k3(self, col3):
        t = np.linspace(0, 1, 11)
        assert np.allclose(p_phi_poly(col3.members[0], t), 1 + t ** 2 / 3)

    def test_sign_closed_invariance(self):
        ex = nae_sat(4).explicit()
        t = np.linspace(0, 1, 7)
        ref = p_phi_poly(ex.members[0], t)
        for phi in ex.members[1:]:
            assert np.allclose(p_phi_poly(phi, t), ref)
        assert np.allclose(expected_log_p(nae_sat(4), t), expected_log_p(ex, t))

    def test_entropy(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == pytest.approx(-math.log(2))
        assert binary_entropy(0.5) == pytest.approx(-0.75 * math.log(1.5) - 0.25 * math.log(0.5))
        t = np.linspace(0.001, 0.999, 50)
        direct = -((1 + t) / 2) * np.log(1 + t) - ((1 - t) / 2) * np.log(1 - t)
        assert np.allclose(binary_entropy(t), direct, atol=1e-14)
        for bad in (-0.1, 1.1, float("nan")):
            with pytest.raises(InputError):
                binary_entropy(bad)


class TestRp:
    def test_k3_limit0(self, col3):
        res = r_p_search(col3)
        assert res.value == pytest.approx(1.5, abs=1e-12)
        assert res.source == "limit0"
        t = np.arange(1, 1000) / 1000
        g = -binary_entropy(t) / np.log1p(t ** 2 / 3)
        assert np.all(g > 1.5)
        assert g[-1] < math.log(2) / math.log(4 / 3) + 0.05
        assert math.log(2) / math.log(4 / 3) == pytest.approx(2.410, abs=1e-3)

    @pytest.mark.parametrize("k", range(3, 13))
    def test_lower_bound(self, k):
        for m in (hypergraph_2col(k), nae_sat(k)):
            assert r_p(m, grid_steps=2000) >= 0.25 / omega_p(m)

    def test_report_k3(self, col3):
        rep = threshold_report(col3)
        assert rep.r_f == pytest.approx(ALPHA_3, abs=1e-9)
        assert rep.r_p == pytest.approx(1.5)
        assert rep.r_f > rep.r_p
        assert set(rep.as_dict()) >= {"r_f", "r_p", "xi"}

    def test_report_k30(self):
        rep = threshold_report(hypergraph_2col(30), grid_steps=2000)
        assert rep.r_f < rep.r_p
        assert rep.r_f / rep.r_p < ratio_bound(30)

    def test_report_names_flag(self):
        phi = ConstraintFunction(3, frozenset({0}))
        with pytest.raises(DomainError, match="non_trivial|symmetric|balance"):
            threshold_report(CSPModel(3, (phi,), (1.0,)))

    def test_grid_steps_validated(self, col3):
        with pytest.raises(InputError):
            r_p(col3, grid_steps=1)
