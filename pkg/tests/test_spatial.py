import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from emfsg.spatial import (
    InsufficientTruncationError,
    MarkedPattern,
    NetworkParams,
    Window,
    attach_marks,
    bgpp_serving_density,
    default_kmax,
    sample_bgpp,
    sample_bgpp_dpp,
    sample_ppp,
    sample_radial_batch,
    serving_pdf,
)


def integrate(f, hi, n=4000):
    x = np.linspace(0, hi, n)
    return np.trapezoid(f(x), x)


class TestParams:
    def test_defaults_valid(self):
        pr = NetworkParams()
        assert pr.c4 == pytest.approx(math.pi * pr.lambda4)

    @pytest.mark.parametrize("bad", [dict(beta4=0.0), dict(beta5=1.2), dict(alpha=2.0), dict(p=1.5),
                                     dict(eta=0.0), dict(lambda4=-1.0), dict(D=-1.0)])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            NetworkParams(**bad)

    def test_window(self):
        assert Window(10.0).area == pytest.approx(100 * math.pi)
        with pytest.raises(ValueError):
            Window(0.0)


class TestMarkedPattern:
    def test_sorted_and_serving(self):
        pts = [[3, 0], [0, 1], [0, -2]]
        mp = MarkedPattern.from_points(pts, kept=[True, False, True])
        np.testing.assert_allclose(mp.sq_dist, [1, 4, 9])
        assert mp.serving_index == 1
        assert mp.n_kept == 2
        with pytest.raises(ValueError):
            mp.sq_dist[0] = 0.0

    def test_no_kept_point(self):
        assert MarkedPattern.from_points([[1, 1]], kept=[False]).serving_index == -1

    def test_marks(self):
        rng = np.random.default_rng(0)
        mp = attach_marks(sample_ppp(1e-3, Window(200.0), rng), 0.5, 0.01, rng)
        assert mp.aligned[mp.serving_index]
        assert abs(mp.colocated.mean() - 0.5) < 0.15
        with pytest.raises(ValueError):
            attach_marks(mp, 0.5, 0.5, rng)


class TestSamplers:
    def test_ppp_count(self):
        rng = np.random.default_rng(1)
        w = Window(30.0)
        n = [len(sample_ppp(0.1, w, rng)) for _ in range(400)]
        assert abs(np.mean(n) - 0.1 * w.area) < 4 * math.sqrt(0.1 * w.area / 400)

    @pytest.mark.parametrize("beta", [0.3, 0.75, 1.0])
    def test_bgpp_intensity(self, beta):
        rng = np.random.default_rng(2)
        w = Window(20.0)
        n = [sample_bgpp(beta, 0.1, w, rng).n_kept for _ in range(400)]
        mean = 0.1 * w.area
        assert abs(np.mean(n) - mean) < 4 * math.sqrt(mean / 400)

    def test_dpp_intensity_and_repulsion(self):
        # A DPP has sub-Poisson count variance in any region.
        rng = np.random.default_rng(3)
        w = Window(5.0)
        n = np.array([len(sample_bgpp_dpp(0.9, 1.0 / math.pi, w, rng)) for _ in range(300)])
        assert abs(n.mean() - 25.0) < 1.0
        assert n.var() < 0.5 * n.mean()

    def test_dpp_points_inside_window(self):
        rng = np.random.default_rng(4)
        w = Window(4.0, (10.0, -3.0))
        mp = sample_bgpp_dpp(0.5, 0.5, w, rng)
        assert np.all(np.hypot(mp.points[:, 0] - 10.0, mp.points[:, 1] + 3.0) <= 4.0 + 1e-9)

    def test_bad_beta(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            sample_bgpp(0.0, 1.0, Window(1.0), rng)

    @pytest.mark.parametrize("model", ["ppp", "bgpp"])
    def test_radial_batch_layout(self, model):
        rng = np.random.default_rng(5)
        sq, kept = sample_radial_batch(model, 1e-4, Window(300.0), 50, rng, beta=0.6)
        assert sq.shape == kept.shape and sq.shape[0] == 50
        fin = np.where(np.isfinite(sq), sq, 1e300)
        assert np.all(np.diff(fin, axis=1) >= 0)
        assert not np.any(kept & ~np.isfinite(sq))
        assert np.all(sq[np.isfinite(sq)] < 300.0**2)


class TestServingLaw:
    def test_ppp_density_normalised(self):
        d = serving_pdf("ppp", 1e-4)
        assert integrate(d, 600.0, 40000) == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("beta", [0.2, 0.75, 1.0])
    def test_bgpp_density_normalised(self, beta):
        d = serving_pdf("bgpp", 1.0, beta)
        assert integrate(d, 80.0 / beta, 20000) == pytest.approx(1.0, abs=1e-4)

    def test_truncation_error(self):
        with pytest.raises(InsufficientTruncationError):
            serving_pdf("bgpp", 1.0, 0.5, k_max=2)

    def test_bgpp_density_vs_simulation(self):
        # u = c R^2 / beta of the nearest kept radial candidate.
        beta, lam, size = 0.75, 1.0, 20000
        rng = np.random.default_rng(6)
        sq, kept = sample_radial_batch("bgpp", lam, Window(12.0), size, rng, beta=beta)
        first = np.argmax(kept, axis=1)
        u = math.pi * lam * sq[np.arange(size), first] / beta
        grid = np.linspace(0, 8, 2001)
        cdf = np.concatenate([[0], np.cumsum(0.5 * np.diff(grid) * (
            (d := bgpp_serving_density(grid, beta, default_kmax(beta)))[1:] + d[:-1]))])
        assert stats.kstest(u, lambda x: np.interp(x, grid, cdf)).statistic < 0.015

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.05, 1.0))
    def test_density_positive(self, beta):
        u = np.geomspace(1e-3, 20.0 / beta, 30)
        assert np.all(bgpp_serving_density(u, beta, default_kmax(beta)) > 0)
