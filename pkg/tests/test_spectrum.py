import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from meanfield import (NetworkHyperparams, backprop_variance_trajectory, jacobian_moments,
                       make_activation, moment_mu, moment_ratio, solve_q_star_eoc)
from meanfield.activations import KINDS


def _erf_arg(a, q):
    return special.erf(a / math.sqrt(2 * q))


class TestMoments:
    def test_shtanh_closed_form(self, eoc_shtanh):
        hp, q = eoc_shtanh
        e = _erf_arg(1.0, q)
        np.testing.assert_allclose(moment_mu(hp.act, q, 1), e, rtol=1e-13)
        np.testing.assert_allclose(moment_mu(hp.act, q, 2), e, rtol=1e-13)
        assert round(moment_mu(hp.act, 0.63, 1), 3) == 0.792

    @pytest.mark.parametrize("k", [0.5, 2.0])
    def test_slope_powers(self, k):
        act = make_activation("shtanh", 1.5, k)
        e = _erf_arg(1.5, 0.8)
        np.testing.assert_allclose(moment_mu(act, 0.8, 1), k ** 2 * e, rtol=1e-13)
        np.testing.assert_allclose(moment_mu(act, 0.8, 2), k ** 4 * e, rtol=1e-13)

    def test_wide_linear_region(self):
        act = make_activation("shtanh", 100.0, 1.0)
        for order in (1, 2, 3):
            assert abs(moment_mu(act, 1.0, order) - 1) <= 1e-10

    def test_tanh_against_adaptive_quadrature(self):
        act = make_activation("tanh")
        f = lambda z: (1 - math.tanh(math.sqrt(0.7) * z) ** 2) ** 4 * math.exp(-z * z / 2)
        oracle = integrate.quad(f, -np.inf, np.inf, epsabs=1e-14)[0] / math.sqrt(2 * math.pi)
        np.testing.assert_allclose(moment_mu(act, 0.7, 2), oracle, rtol=1e-10)

    def test_rejects_bad_order(self):
        with pytest.raises(ValueError):
            moment_mu(make_activation("tanh"), 1.0, 0)

    @given(st.sampled_from(KINDS), st.floats(1e-2, 50))
    def test_jensen(self, kind, q):
        act = make_activation(kind, 1.3, 1.0)
        mu1, mu2 = moment_mu(act, q, 1), moment_mu(act, q, 2)
        assert mu1 > 0 and mu2 > 0
        assert mu2 >= mu1 * mu1 * (1 - 1e-12)


class TestMomentRatio:
    def test_shtanh(self, eoc_shtanh):
        hp, q = eoc_shtanh
        np.testing.assert_allclose(moment_ratio(hp.act, q), 1 / _erf_arg(1.0, q), rtol=1e-13)
        assert round(moment_ratio(hp.act, 0.63), 3) == 1.262

    @pytest.mark.parametrize("kind", ["ssoftsign", "ssinusoid", "shard-saw"])
    def test_erf_sandwich(self, kind):
        act = make_activation(kind, 1.0, 1.0)
        q = solve_q_star_eoc(act, 0.1)[0].value
        e = _erf_arg(1.0, q)
        assert e <= moment_ratio(act, q) <= e ** -2

    def test_linear_regime(self):
        assert abs(moment_ratio(make_activation("shtanh", 50.0, 1.0), 1.0) - 1) <= 1e-10

    def test_decreases_in_a_on_eoc(self):
        vals = []
        for a in (0.5, 1, 2, 5, 10, 20):
            act = make_activation("shtanh", a, 1.0)
            vals.append(moment_ratio(act, solve_q_star_eoc(act, 0.1)[0].value))
        assert np.all(np.diff(vals) < 0)


class TestJacobianMoments:
    def test_power_growth(self, eoc_shtanh):
        hp, q = eoc_shtanh
        mu1 = moment_mu(hp.act, q, 1)
        fast = NetworkHyperparams(hp.act, 1.1 / mu1, hp.sigma_b2)
        for scheme in ("gaussian", "orthogonal"):
            m = jacobian_moments(fast, q, 50, scheme)
            np.testing.assert_allclose(m.m1, 1.1 ** 50, rtol=1e-12)
            assert round(m.m1, 2) == 117.39

    @pytest.mark.parametrize("L", [1, 7, 100])
    def test_eoc_structure(self, eoc_shtanh, L):
        hp, q = eoc_shtanh
        g = jacobian_moments(hp, q, L, "gaussian")
        o = jacobian_moments(hp, q, L, "orthogonal")
        assert abs(g.m1 - 1) <= L * 1e-8
        ratio = g.mu2 / g.mu1 ** 2
        np.testing.assert_allclose(g.var_jjt, L * ratio, rtol=1e-6)
        np.testing.assert_allclose(o.var_jjt, L * (ratio - 1), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(g.var_jjt - o.var_jjt, L * g.chi1 ** (2 * L), rtol=1e-12)
        assert g.var_jjt >= L * (1 - 1e-6)
        assert g.var_jjt == g.m2 - g.m1 ** 2
        assert (g.s1, o.s1) == (-1.0, 0.0)

    def test_orthogonal_variance_shrinks_with_a(self):
        out = []
        for a in (1.0, 5.0, 50.0):
            act = make_activation("shtanh", a, 1.0)
            fp, sw = solve_q_star_eoc(act, 0.1)
            out.append(jacobian_moments(NetworkHyperparams(act, sw, 0.1), fp.value, 100,
                                        "orthogonal").var_jjt)
        assert np.all(np.diff(out) < 0)
        assert out[-1] < 0.1

    def test_validation(self, eoc_shtanh):
        hp, q = eoc_shtanh
        with pytest.raises(ValueError):
            jacobian_moments(hp, q, 0)
        with pytest.raises(ValueError):
            jacobian_moments(hp, q, 4, "uniform")


class TestBackprop:
    def test_fixed_point(self):
        np.testing.assert_array_equal(backprop_variance_trajectory(1.0, [50] * 6, 1.0), 1.0)

    def test_geometric(self):
        out = backprop_variance_trajectory(2.0, [30] * 10, 1.0)
        np.testing.assert_array_equal(out, 2.0 ** np.arange(9, -1, -1))
        assert out[0] == 512

    def test_width_ratio(self):
        np.testing.assert_array_equal(backprop_variance_trajectory(1.0, [100, 200], 1.0), [2.0, 1.0])

    @pytest.mark.parametrize("widths", [[10], [10, 0], [10, -3], [10, 2.5]])
    def test_rejects_bad_widths(self, widths):
        with pytest.raises(ValueError):
            backprop_variance_trajectory(1.0, widths, 1.0)
