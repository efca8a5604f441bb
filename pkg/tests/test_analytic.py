import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from emfsg.analytic import (
    CurveBank,
    DistributionCurve,
    ScenarioSpec,
    cdf_exposure,
    cdf_interference_5g,
    cf_exposure_4g,
    cf_exposure_5g,
    cf_exposure_endc,
    cf_interference,
    cond_serving_law,
    monotone_cdf,
    norm_model,
    norm_rat,
    pdf_exposure,
)
from emfsg.montecarlo import McRunSpec, ecdf, ks_distance, run_exposure_mc
from emfsg.propagation import dbm_to_w
from emfsg.spatial import NetworkParams

PR = NetworkParams()
TAU = dbm_to_w(np.linspace(-80, 60, 141))


class TestCurves:
    def test_validation(self):
        with pytest.raises(ValueError):
            DistributionCurve([1, 0], [0, 1])
        with pytest.raises(ValueError):
            DistributionCurve([0, 1], [0, 1], kind="cdff")
        with pytest.raises(ValueError):
            DistributionCurve([0, 1], [0])

    def test_quantile_linear(self):
        c = DistributionCurve([0.0, 1.0, 2.0], [0.0, 0.4, 1.0])
        assert c.quantile(0.7) == pytest.approx(1.5)
        assert c.quantile(0.0) == 0.0

    def test_monotone_cdf(self):
        v, meta = monotone_cdf([0.0, 0.3, 0.29999, 0.8, 1.0000001])
        assert np.all(np.diff(v) >= 0) and v.max() <= 1.0
        assert not meta["isotonic_reported"]
        with pytest.warns(RuntimeWarning):
            monotone_cdf([0.0, 0.5, 0.4, 1.0])

    def test_names(self):
        assert norm_rat("EN-DC") == "endc" and norm_model("BGPP") == "bgpp"
        with pytest.raises(ValueError):
            norm_rat("3g")

    def test_curve_bank_interpolates(self):
        x = np.geomspace(1e-3, 1e3, 61)
        F = np.vstack([1 - np.exp(-x), 1 - np.exp(-x / 10)])
        bank = CurveBank(x, F)
        np.testing.assert_allclose(bank([0, 1], [0.37, 2.2]), [1 - math.exp(-0.37), 1 - math.exp(-0.22)],
                                   atol=2e-4)
        assert bank(0, 0.0) == F[0, 0] and bank(1, 1e9) == F[1, -1]


class TestCharacteristicFunctions:
    @pytest.mark.parametrize("cf", [cf_exposure_4g, cf_exposure_5g, cf_exposure_endc])
    @pytest.mark.parametrize("model", ["ppp", "bgpp"])
    def test_basic_cf_properties(self, cf, model):
        t = np.geomspace(1e2, 1e9, 12)
        phi = cf(t, PR, model)
        assert np.all(np.abs(phi) <= 1 + 1e-9)
        np.testing.assert_allclose(cf(-t, PR, model), np.conj(phi), rtol=1e-12)
        assert abs(cf(np.array([1e-6]), PR, model)[0] - 1) < 1e-5

    def test_endc_without_5g_is_4g(self):
        pr = PR.replace(p=0.0)
        t = np.geomspace(1e3, 1e9, 9)
        np.testing.assert_allclose(cf_exposure_endc(t, pr, "ppp"), cf_exposure_4g(t, pr, "ppp"), atol=1e-10)

    def test_conditional_interference_ppp_mean(self):
        # E[I | r] = 2 pi lam eta P int_r^inf l(x) x dx = pi lam eta P r^(2 - alpha) * 2 / (alpha - 2)
        r = 300.0
        h = 1e-2 / (PR.P5_eff * r**-4)
        phi = cf_interference(np.array([h]), PR, "5g", "ppp", [r])[0, 0]
        mean = math.pi * PR.lambda5 * PR.eta * PR.P5_eff * r**-2
        assert (phi.imag / h) == pytest.approx(mean, rel=1e-3)


@pytest.fixture(scope="module")
def cdf4():
    return cdf_exposure(ScenarioSpec("4g", "ppp"), TAU)


class TestExposureCdf:
    def test_cdf_is_distribution(self, cdf4):
        v = cdf4.values
        assert np.all(np.diff(v) >= 0) and 0 <= v[0] and v[-1] <= 1
        assert v[-1] > 0.999

    def test_pdf_matches_cdf(self, cdf4):
        # integrate the pdf between grid points and compare with the CDF increments
        lo, hi = dbm_to_w(-60.0), dbm_to_w(-20.0)
        xs = np.geomspace(lo, hi, 801)
        pdf = pdf_exposure(ScenarioSpec("4g", "ppp"), xs).values
        mass = np.trapezoid(pdf, xs)
        F = np.interp([lo, hi], cdf4.grid, cdf4.values)
        assert mass == pytest.approx(F[1] - F[0], abs=2e-3)

    def test_matches_small_simulation(self, cdf4):
        spec = McRunSpec(ScenarioSpec("4g", "ppp"), n_realizations=20_000, master_seed=11)
        mc = run_exposure_mc(spec)
        assert ks_distance(cdf4, ecdf(mc.exposure, TAU)) < 0.02


class TestEndcConditional:
    def test_ppp_conditional_law(self):
        law = cond_serving_law("ppp", 100.0, PR)
        assert law.mass == pytest.approx(1 - PR.p)
        tot, _ = integrate.quad(law, 100.0, 5000.0, limit=200)
        assert tot == pytest.approx(1 - PR.p, rel=1e-8)
        norm = cond_serving_law("ppp", 100.0, PR, normalized=True)
        # closed-form median: r5^2 = r4^2 + ln 2 / (pi p lam4)
        med = math.sqrt(100.0**2 + math.log(2) / (math.pi * PR.p * PR.lambda4))
        assert integrate.quad(norm, 100.0, med)[0] == pytest.approx(0.5, rel=1e-8)
        assert law(50.0) == 0.0

    def test_bgpp_conditional_law_mass(self):
        law = cond_serving_law("bgpp", 150.0, PR)
        assert law.mass == pytest.approx(1 - PR.p, abs=1e-3)
        r = np.linspace(150.0, 3000.0, 6000)
        assert np.trapezoid(law(r), r) == pytest.approx(1 - PR.p, abs=2e-3)

    def test_step_without_5g(self):
        sc = ScenarioSpec("endc", "ppp", PR.replace(p=0.0))
        c = cdf_interference_5g([0.0, 1e-9], 100.0, "colocated", sc)
        np.testing.assert_array_equal(c.values, [1.0, 1.0])

    def test_bad_modes(self):
        with pytest.raises(ValueError):
            cdf_interference_5g([1e-9], 100.0, "both", ScenarioSpec("endc"))
        with pytest.raises(ValueError):
            cdf_interference_5g([1e-9], 100.0, "non_colocated", ScenarioSpec("endc", params=PR.replace(p=1.0)))
        with pytest.raises(ValueError):
            cdf_interference_5g([1e-9], 100.0, "colocated", ScenarioSpec("4g"))

    def test_ppp_conditional_interference_vs_simulation(self):
        # co-located server at r4; 5G interferers = aligned co-located sites beyond r4
        rng = np.random.default_rng(5)
        r4, R, n = 150.0, 30000.0, 20000
        lam = PR.p * PR.eta * PR.lambda4
        counts = rng.poisson(lam * math.pi * (R**2 - r4**2), size=n)
        sq = r4**2 + (R**2 - r4**2) * rng.uniform(size=counts.sum())
        pw = PR.P5_eff * rng.exponential(size=sq.size) * sq**-2
        I = np.bincount(np.repeat(np.arange(n), counts), weights=pw, minlength=n)
        x = np.geomspace(np.quantile(I, 0.01), np.quantile(I, 0.99), 60)
        ana = cdf_interference_5g(x, r4, "colocated", ScenarioSpec("endc", "ppp"))
        assert ks_distance(ana, ecdf(I, x)) < 0.02

    @settings(max_examples=5, deadline=None)
    @given(st.floats(60.0, 600.0))
    def test_conditional_cdf_monotone_in_r4(self, r4):
        # farther serving site, fewer interferers: the CDF can only move up
        sc = ScenarioSpec("endc", "ppp")
        x = dbm_to_w(np.linspace(-110, -40, 15))
        a = cdf_interference_5g(x, r4, "colocated", sc).values
        b = cdf_interference_5g(x, 1.5 * r4, "colocated", sc).values
        assert np.all(b >= a - 1e-6)
