import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from emfsg.specfun import (
    CFHandle,
    QuadratureSpec,
    gil_pelaez_cdf,
    gil_pelaez_pdf,
    hyp2f1_omega,
    omega_integral,
    reg_gamma_upper,
    tabulate_cf,
    wynn_epsilon,
)


def omega_series(z, alpha, terms=4000):
    # 2F1(1, 1-d; 2-d; z) = (1-d) * sum z^n / (n+1-d)
    d = 2.0 / alpha
    n = np.arange(terms)
    return complex((1 - d) * np.sum(z**n / (n + 1 - d)))


def arctanh_identity(z):
    s = np.sqrt(complex(z))
    return complex(np.arctanh(s) / s) if s != 0 else 1.0 + 0j


EXP1 = CFHandle(lambda t: 1.0 / (1.0 - 1j * t), "algebraic", 1.0)
GAMMA2 = CFHandle(lambda t: 1.0 / (1.0 - 1j * t) ** 2, "algebraic", 2.0)


class TestOmega:
    @pytest.mark.parametrize("z", [0.0, 0.3, -0.5 + 0.2j, 0.6j, -0.7, 0.5 - 0.5j])
    @pytest.mark.parametrize("alpha", [2.5, 3.0, 4.0, 6.0])
    def test_series_inside_disk(self, z, alpha):
        assert abs(hyp2f1_omega(z, alpha) - omega_series(z, alpha)) <= 1e-12

    @pytest.mark.parametrize("z", [-1e3j, 1e3j, -50.0, -1e4, 3 + 40j, 0.99 + 0.1j, 1e-3j])
    def test_alpha4_identity(self, z):
        assert abs(hyp2f1_omega(z, 4.0) - arctanh_identity(z)) <= 1e-10 * max(1, abs(arctanh_identity(z)))

    @pytest.mark.parametrize("z", [-3.0, -40j, 2 + 5j, 0.95 - 0.2j])
    @pytest.mark.parametrize("alpha", [3.0, 3.7, 5.0])
    def test_matches_euler_integral(self, z, alpha):
        assert abs(hyp2f1_omega(z, alpha) - omega_integral(z, alpha)) <= 1e-10

    def test_scipy_on_real_axis(self):
        z = np.linspace(-20, 0.9, 37)
        ref = special.hyp2f1(1, 0.5, 1.5, z)
        np.testing.assert_allclose(hyp2f1_omega(z, 4.0).real, ref, rtol=1e-12, atol=1e-14)

    def test_vectorised_shape(self):
        z = np.array([[0.1, -1j], [2j, -5.0]])
        assert hyp2f1_omega(z, 4.0).shape == (2, 2)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-1e3, 1e3), st.floats(2.2, 8.0))
    def test_conjugate_symmetry(self, y, alpha):
        z = complex(-1.0, y)
        assert abs(hyp2f1_omega(z.conjugate(), alpha) - np.conj(hyp2f1_omega(z, alpha))) <= 1e-12 * max(
            1.0, abs(hyp2f1_omega(z, alpha)))

    def test_rejects_bad_alpha(self):
        with pytest.raises(ValueError):
            hyp2f1_omega(0.1, 2.0)


class TestRegGamma:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 300), st.floats(0, 500))
    def test_poisson_identity(self, k, u):
        # Gamma(k, u)/Gamma(k) = P(Poisson(u) <= k-1)
        assert math.isclose(float(reg_gamma_upper(k, u)), stats.poisson.cdf(k - 1, u), rel_tol=1e-9, abs_tol=1e-14)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            reg_gamma_upper(0.5, 1.0)


class TestGilPelaez:
    tau = np.linspace(0.1, 10, 100)

    def test_exponential(self):
        np.testing.assert_allclose(gil_pelaez_cdf(EXP1, self.tau), 1 - np.exp(-self.tau), atol=1e-6)
        np.testing.assert_allclose(gil_pelaez_pdf(EXP1, self.tau), np.exp(-self.tau), atol=1e-6)

    def test_gamma2(self):
        ref = stats.gamma(2)
        np.testing.assert_allclose(gil_pelaez_cdf(GAMMA2, self.tau), ref.cdf(self.tau), atol=1e-6)
        np.testing.assert_allclose(gil_pelaez_pdf(GAMMA2, self.tau), ref.pdf(self.tau), atol=1e-6)

    def test_gaussian_exponential_decay(self):
        cf = CFHandle(lambda t: np.exp(3j * t - 0.5 * t**2), "exponential", 3.0, t_max=40.0)
        x = np.linspace(0.5, 6, 23)
        np.testing.assert_allclose(gil_pelaez_cdf(cf, x), stats.norm(3).cdf(x), atol=1e-7)

    def test_full_output_and_scalar(self):
        v, err = gil_pelaez_cdf(EXP1, 1.0, full_output=True)
        assert np.ndim(v) == 0
        assert abs(v - (1 - math.exp(-1))) < 1e-7
        assert np.all(np.asarray(err) >= 0)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.2, 20.0))
    def test_scaled_exponential(self, mu):
        cf = CFHandle(lambda t: 1.0 / (1.0 - 1j * mu * t), "algebraic", mu)
        x = np.array([0.3, 1.0, 2.5]) * mu
        np.testing.assert_allclose(gil_pelaez_cdf(cf, x), 1 - np.exp(-x / mu), atol=1e-6)

    def test_tabulated_cf(self):
        cf = tabulate_cf(lambda t: 1.0 / (1.0 - 1j * t) ** 2, 1e-6, 1e6, per_decade=64, scale=2.0)
        np.testing.assert_allclose(gil_pelaez_cdf(cf, self.tau), stats.gamma(2).cdf(self.tau), atol=1e-5)

    def test_quadrature_spec_validation(self):
        with pytest.raises(ValueError):
            QuadratureSpec(abs_tol=0)
        with pytest.raises(ValueError):
            CFHandle(lambda t: t, "weird")


def test_wynn_accelerates_alternating_series():
    partial = np.cumsum([(-1) ** k / (k + 1) for k in range(12)])
    est, err = wynn_epsilon(partial)
    assert abs(est - math.log(2)) < 1e-8
