import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wcrlab.estimators import MEDIAN, SAMPLE_MEAN, WASSERSTEIN, Statistic
from wcrlab.families import BASES, GAUSSIAN, LAPLACE, LOGISTIC, UNIFORM, make_location, make_location_scale, make_scale
from wcrlab.numerics import McConfig, is_psd
from wcrlab.winfo import (
    DegenerateStatistic,
    info_matrix,
    quadratic_approx_check,
    transport_cost_1d,
    transport_tail_bound,
    w2_distance_1d,
    wvariance_mc,
    wvariance_quadrature,
)
from wcrlab.wscore import scores_for


class TestInfoMatrix:
    @pytest.mark.parametrize("theta", [(0.0, 1.0), (2.0, 0.5), (-1.0, 3.0)])
    def test_identity(self, ls_family, theta):
        G = info_matrix(ls_family, theta)
        assert np.max(np.abs(G.matrix - np.eye(2))) < 1e-8

    @pytest.mark.parametrize("n", [1, 5, 100])
    def test_linear_in_n(self, ls_family, n):
        G = info_matrix(ls_family, (0.3, 1.4), n_obs=n)
        assert np.max(np.abs(G.matrix - n * np.eye(2))) < 1e-8 * n
        assert G.n_obs == n

    def test_from_scores_agrees(self, ls_family):
        th = (0.3, 1.4)
        a = info_matrix(ls_family, th).matrix
        b = info_matrix(ls_family, th, scores=scores_for(ls_family, th)).matrix
        assert np.max(np.abs(a - b)) < 1e-8

    def test_scale_family(self, scale_family):
        # G = E[(x/s)^2] = 1 for a unit-variance base
        assert info_matrix(scale_family, (2.0,)).matrix[0, 0] == pytest.approx(1.0, abs=1e-9)

    def test_location_family(self, loc_family):
        assert info_matrix(loc_family, (0.7,)).matrix[0, 0] == pytest.approx(1.0, abs=1e-9)

    def test_uniform(self):
        G = info_matrix(make_location_scale(UNIFORM), (0.0, 1.0)).matrix
        assert np.max(np.abs(G - np.eye(2))) < 1e-8

    def test_bad_nobs(self):
        with pytest.raises(ValueError):
            info_matrix(make_location(GAUSSIAN), (0.0,), n_obs=0)

    @pytest.mark.parametrize("name", sorted(BASES))
    def test_psd_random_theta(self, name):
        rng = np.random.default_rng(3)
        fam = make_location_scale(BASES[name])
        for _ in range(20):
            th = (rng.uniform(-5, 5), rng.uniform(0.1, 5))
            G = info_matrix(fam, th)
            assert G.psd and is_psd(G.matrix)
            assert np.all(G.eigenvalues > 0)


class TestWVariance:
    def test_mean_quadrature(self, ls_family):
        V = wvariance_quadrature(lambda x: 1.0, ls_family, (0.0, 1.0))
        assert V.matrix[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_square_quadrature(self, ls_family):
        # grad of x^2 is 2x; E[4 x^2] = 4
        V = wvariance_quadrature(lambda x: 2 * x, ls_family, (0.0, 1.0))
        assert V.matrix[0, 0] == pytest.approx(4.0, abs=1e-8)

    @pytest.mark.parametrize("n", [2, 7, 30])
    def test_wasserstein_estimator(self, ls_family, n):
        V = wvariance_mc(WASSERSTEIN, ls_family, (0.0, 1.0), n, McConfig(trials=2000))
        assert np.max(np.abs(V.matrix - np.eye(2) / n)) < 1e-13

    def test_sample_mean(self, ls_family):
        V = wvariance_mc(SAMPLE_MEAN, ls_family, (0.0, 1.0), 10, McConfig(trials=2000))
        assert V.matrix[0, 0] == pytest.approx(0.1, abs=1e-15)

    @pytest.mark.parametrize("n,expected", [(5, 1.0), (11, 1.0), (4, 0.5), (10, 0.5)])
    def test_median(self, ls_family, n, expected):
        V = wvariance_mc(MEDIAN, ls_family, (0.0, 1.0), n, McConfig(trials=2000))
        assert V.matrix[0, 0] == pytest.approx(expected, abs=1e-15)

    def test_degenerate(self):
        bad = Statistic("bad", 1, lambda x: x[..., :1], lambda x: np.full(x.shape[:-1] + (1, x.shape[-1]), np.nan))
        with pytest.raises(DegenerateStatistic):
            wvariance_mc(bad, make_location(GAUSSIAN), (0.0,), 4, McConfig(trials=100))


class TestW2:
    def test_location_shift(self, loc_family):
        # halved convention: W2^2 = d^2 / 2
        assert w2_distance_1d(loc_family, (0.0,), loc_family, (0.3,)) == pytest.approx(0.3 / math.sqrt(2), rel=1e-8)

    def test_gaussian_closed_form(self):
        fam = make_location_scale(GAUSSIAN)
        cost = transport_cost_1d(fam, (0.0, 1.0), fam, (1.0, 2.0))
        assert cost == pytest.approx(1.0 + 1.0, rel=1e-8)
        assert w2_distance_1d(fam, (0.0, 1.0), None, (1.0, 2.0)) == pytest.approx(1.0, rel=1e-8)

    def test_identity_of_indiscernibles(self, ls_family):
        assert w2_distance_1d(ls_family, (0.5, 1.2), ls_family, (0.5, 1.2)) == 0.0

    def test_cross_family(self):
        g = make_location_scale(GAUSSIAN)
        lap = make_location_scale(LAPLACE)
        d1 = w2_distance_1d(g, (0, 1), lap, (0, 1))
        d2 = w2_distance_1d(lap, (0, 1), g, (0, 1))
        assert d1 > 0 and d1 == pytest.approx(d2, rel=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(
        a=st.tuples(st.floats(-3, 3), st.floats(0.3, 3)),
        b=st.tuples(st.floats(-3, 3), st.floats(0.3, 3)),
        c=st.tuples(st.floats(-3, 3), st.floats(0.3, 3)),
        base=st.sampled_from([GAUSSIAN, LAPLACE, LOGISTIC]),
    )
    def test_metric_properties(self, a, b, c, base):
        fam = make_location_scale(base)
        ab = w2_distance_1d(fam, a, fam, b)
        ba = w2_distance_1d(fam, b, fam, a)
        ac = w2_distance_1d(fam, a, fam, c)
        cb = w2_distance_1d(fam, c, fam, b)
        assert ab == pytest.approx(ba, rel=1e-9, abs=1e-12)
        assert ab <= ac + cb + 1e-9
        # location-scale with a standardised base: cost = dmu^2 + dsigma^2
        assert 2 * ab**2 == pytest.approx((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2, rel=1e-6, abs=1e-12)


class TestTailBound:
    def test_bounds_the_clipped_cost(self):
        fam = make_location_scale(GAUSSIAN)
        a, b = (0.0, 1.0), (1.0, 2.0)
        dropped = 2.0 - transport_cost_1d(fam, a, fam, b)
        bound = transport_tail_bound(fam, a, fam, b)
        assert 0 <= dropped <= bound < 1e-7

    def test_heavier_tail_larger(self):
        g, lap = make_location_scale(GAUSSIAN), make_location_scale(LAPLACE)
        assert transport_tail_bound(lap, (0, 1), lap, (0, 1)) > transport_tail_bound(g, (0, 1), g, (0, 1))

    def test_compact_support(self):
        # quantile gap is sqrt(3) (2u - 1) on [-1, 1]; the clipped ends hold about 3 * 2e-10
        fam = make_location_scale(UNIFORM)
        dropped = 1.0 - transport_cost_1d(fam, (0, 1), fam, (0, 2))
        assert 0 <= dropped <= transport_tail_bound(fam, (0, 1), fam, (0, 2)) < 1e-8


class TestQuadraticApprox:
    @pytest.mark.parametrize("direction", [(1.0, 0.0), (0.0, 1.0), (0.6, 0.8)])
    def test_ratio_near_one(self, ls_family, direction):
        rows = quadratic_approx_check(ls_family, (0.0, 1.0), direction, [1e-2])
        assert abs(rows[0]["ratio"] - 1.0) < 1e-3
        assert rows[0]["tail_bound"] < 1e-6

    def test_scale_family_ratio(self):
        fam = make_scale(LOGISTIC)
        rows = quadratic_approx_check(fam, (1.5,), (1.0,), [1e-1, 1e-2])
        assert all(abs(r["ratio"] - 1) < 1e-3 for r in rows)

    def test_errors(self):
        fam = make_location_scale(GAUSSIAN)
        with pytest.raises(ValueError):
            quadratic_approx_check(fam, (0, 1), (0.0, 0.0), [1e-2])
        with pytest.raises(ValueError):
            quadratic_approx_check(fam, (0, 1), (1.0, 0.0), [0.0])
