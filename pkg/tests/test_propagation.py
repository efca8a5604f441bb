import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emfsg.propagation import (
    LN2,
    EmptyPatternError,
    RealizationSample,
    dbm_to_w,
    exposure_from_arrays,
    g_function,
    path_loss,
    realize_exposure,
    realize_rebt,
    solve_g_root,
    throughput,
    w_to_dbm,
)
from emfsg.spatial import MarkedPattern, NetworkParams, attach_marks

PR = NetworkParams(p=0.5, eta=0.5)


def test_unit_conversion_roundtrip():
    x = np.array([-120.0, -30.0, 0.0, 51.0])
    np.testing.assert_allclose(w_to_dbm(dbm_to_w(x)), x)
    assert dbm_to_w(30.0) == pytest.approx(1.0)


def test_path_loss_guard_and_decay():
    ell = path_loss(np.array([0.0, 39.0**2, 40.0**2, 100.0**2]), 4.0, 40.0)
    np.testing.assert_allclose(ell, [1.0, 1.0, 40.0**-4, 1e-8])
    assert path_loss(0.25, 4.0, 0.0, smooth=True) == 1.0


class TestExposure:
    # three sites at 50, 100, 200 m; unit fading
    sq = np.array([[50.0**2, 100.0**2, 200.0**2]])
    one = np.ones((1, 3))

    def test_4g_hand_computed(self):
        out = exposure_from_arrays(self.sq, np.ones((1, 3), bool), "4g", PR, self.one, self.one)
        P = PR.P4_eff
        assert out.S4[0] == pytest.approx(P * 50.0**-4)
        assert out.I4[0] == pytest.approx(P * (100.0**-4 + 200.0**-4))
        assert out.S5[0] == 0 and out.I5[0] == 0

    def test_endc_serving_is_nearest_colocated(self):
        coloc = np.array([[False, True, True]])
        aligned = np.array([[True, False, True]])
        out = exposure_from_arrays(self.sq, np.ones((1, 3), bool), "endc", PR, self.one, self.one,
                                   coloc, aligned)
        P = PR.P5_eff
        assert out.S5[0] == pytest.approx(P * 100.0**-4)
        assert out.I5[0] == pytest.approx(P * 200.0**-4)
        assert out.has5[0]

    def test_endc_without_colocated_site(self):
        out = exposure_from_arrays(self.sq, np.ones((1, 3), bool), "endc", PR, self.one, self.one,
                                   np.zeros((1, 3), bool), np.ones((1, 3), bool))
        assert out.S5[0] == 0 and out.I5[0] == 0 and not out.has5[0]

    def test_empty_pattern(self):
        with pytest.raises(EmptyPatternError):
            exposure_from_arrays(self.sq, np.zeros((1, 3), bool), "4g", PR, self.one, self.one)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_endc_dominates_4g_pathwise(self, seed):
        rng = np.random.default_rng(seed)
        n = 30
        sq = np.sort(rng.uniform(0, 1e6, size=(4, n)), axis=1)
        kept = rng.uniform(size=(4, n)) < 0.8
        kept[:, 0] = True
        h4, h5 = rng.exponential(size=(2, 4, n))
        coloc, aligned = rng.uniform(size=(2, 4, n)) < 0.5
        e4 = exposure_from_arrays(sq, kept, "4g", PR, h4, h5, coloc, aligned).exposure
        ee = exposure_from_arrays(sq, kept, "endc", PR, h4, h5, coloc, aligned).exposure
        assert np.all(ee >= e4)

    def test_realize_exposure_marks_checked(self):
        mp = MarkedPattern.from_points([[10, 0], [0, 300]])
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            realize_exposure(mp, PR, rng, "endc")
        out = realize_exposure(attach_marks(mp, 1.0, 1.0, rng), PR, rng, "endc")
        assert np.ndim(out.S4) == 0 and out.S5 > 0


class TestRebt:
    def test_throughput_and_rebt(self):
        s = RealizationSample(np.array(3.0), np.array(1.0), np.array(0.0), np.array(0.0))
        assert throughput(s, PR, "4g") == pytest.approx(PR.W4 * 2.0)
        rebt, under = realize_rebt(s, PR, "4g")
        assert rebt == pytest.approx(4.0 / (2.0 * PR.W4)) and not under

    def test_zero_throughput_is_infinite(self):
        s = RealizationSample(np.array(0.0), np.array(0.0), np.array(0.0), np.array(1.0))
        rebt, under = realize_rebt(s, PR, "4g")
        assert math.isinf(rebt) and under


class TestGRoot:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(-16, -2), st.floats(-14, -6), st.floats(5, 9), st.floats(0, 3))
    def test_residual_and_uniqueness(self, ls, ly, lw, orel):
        s, y, W = 10**ls, 10**ly, 10**lw
        off = orel * s
        r = float(solve_g_root(s, y, W, off))
        scale = max(s, y * W, off)
        if r == 0.0:
            # root below the smallest double: check it in log space
            lr = solve_g_root(s, y, W, off, return_log=True)
            x = lr - math.log(s)
            resid = s * (1 + off / s + math.exp(x)) - y * W * np.logaddexp(0.0, -x) / LN2
            assert abs(resid) <= 1e-12 * scale * max(1.0, abs(x))
            return
        assert abs(g_function(r, s, y, W, off)) <= 1e-12 * scale
        # strictly increasing: negative below the root, positive above
        assert g_function(r * (1 - 1e-6), s, y, W, off) < 0 < g_function(r * (1 + 1e-6), s, y, W, off)

    def test_vectorised_broadcast(self):
        s = np.geomspace(1e-12, 1e-4, 7)
        r = solve_g_root(s[:, None], np.array([1e-10, 1e-8]), 20e6)
        assert r.shape == (7, 2)

    def test_root_grows_with_y(self):
        y = np.geomspace(1e-13, 1e-6, 50)
        r = solve_g_root(1e-9, y, 20e6)
        assert np.all(np.diff(r) > 0)

    def test_unit_case_against_brentq(self):
        from scipy.optimize import brentq

        ref = brentq(lambda I: 1 + I - math.log2(1 + 1 / I), 1e-6, 10.0, xtol=1e-15, rtol=1e-15)
        assert solve_g_root(1.0, 1.0, 1.0) == pytest.approx(ref, rel=1e-13)
        assert ref == pytest.approx(0.52981, abs=1e-5)
