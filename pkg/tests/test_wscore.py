import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wcrlab.families import GAUSSIAN, LAPLACE, LOGISTIC, UNIFORM, make_custom, make_location_scale, make_scale
from wcrlab.wscore import (
    ScoreError,
    closed_form_score_ls,
    continuity_residual,
    product_score,
    scores_for,
    solve_score_1d,
)


def _grid(family, theta, k=201):
    lo, hi = family.window(theta)
    q = family.quantile(np.array([1e-6, 1 - 1e-6]), theta)
    return np.linspace(max(lo, q[0]), min(hi, q[1]), k)


class TestSolverAgainstClosedForm:
    @pytest.mark.parametrize("theta", [(0.0, 1.0), (1.5, 0.7), (-2.0, 2.5)])
    @pytest.mark.parametrize("i", [0, 1])
    def test_location_scale(self, ls_family, theta, i):
        x = _grid(ls_family, theta)
        num = solve_score_1d(ls_family, theta, i)
        ref = closed_form_score_ls(theta, i)
        assert np.max(np.abs(num.phi(x) - ref.phi(x))) < 1e-8
        assert np.max(np.abs(num.dphi(x) - ref.dphi(x))) < 1e-8

    def test_scale_family(self, scale_family):
        theta = (1.7,)
        x = _grid(scale_family, theta)
        num = solve_score_1d(scale_family, theta, 0)
        ref = scores_for(scale_family, theta)[0]
        assert ref.source == "closed-form"
        assert np.max(np.abs(num.phi(x) - ref.phi(x))) < 1e-8

    def test_closed_form_values(self):
        s = closed_form_score_ls((1.0, 2.0), "sigma")
        assert s.phi(3.0) == pytest.approx(4 / 4 - 1.0)
        assert s.dphi(3.0) == pytest.approx(1.0)
        assert closed_form_score_ls((1.0, 2.0), "mu").phi(3.0) == pytest.approx(2.0)

    def test_closed_form_errors(self):
        with pytest.raises(ValueError):
            closed_form_score_ls((0, -1), 0)
        with pytest.raises(ValueError):
            closed_form_score_ls((0, 1), "nu")


class TestContinuity:
    @pytest.mark.parametrize("i", [0, 1])
    def test_residual(self, ls_family, i):
        theta = (0.3, 1.2)
        score = solve_score_1d(ls_family, theta, i)
        # keep off the Laplace kink where the stencil straddles it
        x = _grid(ls_family, theta, 97)
        x = x[np.abs(x - 0.3) > 1e-3]
        assert np.max(np.abs(continuity_residual(ls_family, theta, score, x))) < 1e-5

    def test_custom_family(self):
        # Gaussian with a mean that moves nonlinearly
        fam = make_custom(
            cdf=lambda x, th: GAUSSIAN.cdf(x - th[0] ** 3),
            quantile=lambda u, th: GAUSSIAN.quantile(u) + th[0] ** 3,
            param_dim=1,
            pdf=lambda x, th: GAUSSIAN.pdf(x - th[0] ** 3),
        )
        theta = (0.8,)
        score = solve_score_1d(fam, theta, 0)
        x = np.linspace(-3, 3, 41) + 0.512
        assert np.max(np.abs(continuity_residual(fam, theta, score, x))) < 1e-5
        # location moving at speed 3 t^2
        assert np.allclose(score.dphi(x), 3 * 0.64, atol=1e-7)


class TestCentering:
    @pytest.mark.parametrize("i", [0, 1])
    def test_mean_zero(self, ls_family, i):
        theta = (0.5, 1.5)
        score = solve_score_1d(ls_family, theta, i)
        lo, hi = score.window
        assert abs(ls_family.expect(lambda x: score.phi(x), theta)) < 1e-8

    def test_uniform_scale(self):
        fam = make_scale(UNIFORM)
        score = solve_score_1d(fam, (2.0,), 0)
        assert abs(fam.expect(lambda x: score.phi(x), (2.0,))) < 1e-8
        x = np.linspace(-3.0, 3.0, 11)
        assert np.allclose(score.dphi(x), x / 2.0, atol=1e-10)


class TestProductScore:
    def test_sum_of_scores(self):
        ps = product_score(scores_for(make_location_scale(GAUSSIAN), (0.0, 1.0)), 3)
        x = np.array([0.5, -1.0, 2.0])
        assert np.allclose(ps.value(x), [1.5, (0.25 + 1 + 4) / 2 - 1.5])
        g = ps.gradient(x)
        assert g.shape == (2, 3)
        assert np.allclose(g, [[1, 1, 1], x])

    def test_batched(self, rng):
        ps = product_score(scores_for(make_location_scale(LAPLACE), (0.0, 1.0)), 5)
        x = rng.normal(size=(7, 5))
        assert ps.value(x).shape == (7, 2)
        assert ps.gradient(x).shape == (7, 2, 5)

    def test_wrong_size(self):
        ps = product_score(closed_form_score_ls((0, 1), 0), 4)
        with pytest.raises(ValueError):
            ps.value(np.zeros(3))
        with pytest.raises(ValueError):
            product_score(closed_form_score_ls((0, 1), 0), 0)


class TestErrors:
    def test_outside_window(self):
        fam = make_location_scale(GAUSSIAN)
        score = solve_score_1d(fam, (0, 1), 0)
        with pytest.raises(ScoreError):
            score.phi(100.0)

    def test_vanishing_density(self):
        # density with a gap at zero inside its support
        fam = make_custom(
            cdf=lambda x, th: np.clip(np.where(np.abs(x) < 0.5, 0.5, np.where(x < 0, (x + 1.5) / 2, (x + 0.5) / 2)), 0, 1)
            + 0 * th[0],
            quantile=lambda u, th: np.where(u < 0.5, 2 * u - 1.5, 2 * u - 0.5) + 0 * th[0],
            param_dim=1,
            pdf=lambda x, th: np.where((np.abs(x) >= 0.5) & (np.abs(x) <= 1.5), 0.5, 0.0) + 0 * th[0],
            support=lambda th: (-1.5, 1.5),
        )
        with pytest.raises(ScoreError):
            solve_score_1d(fam, (0.0,), 0)

    def test_bad_index(self):
        with pytest.raises(IndexError):
            solve_score_1d(make_location_scale(LOGISTIC), (0, 1), 2)


@settings(max_examples=15, deadline=None)
@given(mu=st.floats(-3, 3), sigma=st.floats(0.3, 3), base=st.sampled_from([GAUSSIAN, LOGISTIC]))
def test_solver_matches_closed_form_property(mu, sigma, base):
    fam = make_location_scale(base)
    x = mu + sigma * np.linspace(-3, 3, 13)
    for i in range(2):
        num = solve_score_1d(fam, (mu, sigma), i)
        ref = closed_form_score_ls((mu, sigma), i)
        scale = 1.0 + math.fabs(mu) + sigma
        assert np.max(np.abs(num.phi(x) - ref.phi(x))) < 1e-8 * scale**2
