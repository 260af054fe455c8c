"""Tests for src/model.py — design validation, marginal prior, shrinkage factors, normal means."""

import numpy as np
import pytest
from scipy import integrate, stats

from src.errors import ParameterDomainError
from src.model import (
    GroupedDesign,
    Hyperparameters,
    marginal_prior_pdf,
    normal_means_posterior_estimate,
    normal_means_posterior_mean,
    sample_prior_scales,
    shrinkage_factors,
    shrinkage_posterior_probability,
    shrinkage_prior_logpdf,
    tail_rate,
)


class TestGroupedDesign:
    def test_defaults_and_layout(self):
        gen = np.random.default_rng(0)
        d = GroupedDesign(y=gen.standard_normal(10), C=np.empty((10, 0)),
                          X=gen.standard_normal((10, 5)), group_sizes=[2, 3])
        assert (d.n, d.p, d.q, d.G) == (10, 5, 0, 2)
        assert d.x_names == ["x1", "x2", "x3", "x4", "x5"]
        assert d.group_labels == ["g1", "g2"]
        assert d.group_slice(1) == slice(2, 5)
        assert d.group_index.tolist() == [0, 0, 1, 1, 1]

    def test_sizes_must_match_columns(self):
        with pytest.raises(ParameterDomainError, match="sum to"):
            GroupedDesign(y=np.zeros(4), C=np.empty((4, 0)), X=np.ones((4, 3)), group_sizes=[2, 2])

    def test_rank_deficient_adjustment(self):
        n = 8
        C = np.column_stack([np.ones(n), 2 * np.ones(n)])
        with pytest.raises(ParameterDomainError, match="full column rank"):
            GroupedDesign(y=np.zeros(n), C=C, X=np.eye(n)[:, :2], group_sizes=[2])

    def test_non_finite_rejected(self):
        y = np.array([1.0, np.nan, 0.0])
        with pytest.raises(ParameterDomainError):
            GroupedDesign(y=y, C=np.empty((3, 0)), X=np.ones((3, 1)), group_sizes=[1])


class TestHyperparameters:
    def test_uniform(self):
        h = Hyperparameters.uniform(3, 0.1, 1.0)
        assert h.G == 3 and np.all(h.b == 1.0)

    def test_non_positive_rejected(self):
        with pytest.raises(ParameterDomainError):
            Hyperparameters([0.5, 0.0], [0.5, 0.5])

    def test_replace_keeps_other(self):
        h = Hyperparameters.uniform(2, 0.5, 0.5).replace(b=np.array([1.0, 2.0]))
        assert h.a.tolist() == [0.5, 0.5] and h.b.tolist() == [1.0, 2.0]


class TestShrinkageFactors:
    def test_half_when_prior_scale_equals_noise(self):
        kappa = shrinkage_factors(1.0, 2.0, np.array([2.0]), np.array([1.0, 1.0]), np.array([0, 0])).kappa
        assert np.allclose(kappa, 0.5)

    def test_broadcast_over_draws(self):
        T = 5
        kappa = shrinkage_factors(
            np.ones(T), np.ones(T), np.ones((T, 2)), np.ones((T, 3)), np.array([0, 1, 1]),
        ).kappa
        assert kappa.shape == (T, 3)

    def test_extreme_scales_stay_inside_unit_interval(self):
        kappa = shrinkage_factors(1e-300, 1.0, np.array([1e-300]), np.array([1e-300]), np.array([0])).kappa
        assert 0 < kappa[0] < 1


class TestSamplePriorScales:
    def test_shapes_and_moments(self, rng):
        hyper = Hyperparameters([2.0, 0.5], [3.0, 1.0])
        gamma2, lambda2 = sample_prior_scales(rng, [2, 3], hyper, size=40000)
        assert gamma2.shape == (40000, 2) and lambda2.shape == (40000, 5)
        assert gamma2[:, 0].mean() == pytest.approx(2.0, rel=0.03)
        # IG(3, 1) has mean 1/2
        assert lambda2[:, 0].mean() == pytest.approx(0.5, rel=0.03)
        assert np.median(lambda2[:, 4]) == pytest.approx(stats.invgamma(1.0).median(), rel=0.03)


class TestMarginalPrior:
    def test_symmetric(self):
        assert marginal_prior_pdf(1.3, 1.0, 0.5, 0.5) == pytest.approx(marginal_prior_pdf(-1.3, 1.0, 0.5, 0.5))

    def test_scale_family(self):
        lhs = marginal_prior_pdf(0.8, 4.0, 0.3, 1.0)
        rhs = 0.5 * marginal_prior_pdf(0.4, 1.0, 0.3, 1.0)
        assert lhs == pytest.approx(rhs, rel=1e-6)

    def test_integrates_to_one(self):
        # tail mass beyond |β| = 1e3 is about 1e-6 for b = 1
        total, _ = integrate.quad(lambda x: marginal_prior_pdf(x, 1.0, 1.0, 1.0), -1e3, 1e3, points=[0.0], limit=400)
        assert total == pytest.approx(1.0, abs=1e-5)

    def test_pole_at_zero(self):
        assert marginal_prior_pdf(0.0, 1.0, 0.5, 0.5) == np.inf
        assert np.isfinite(marginal_prior_pdf(0.0, 1.0, 1.0, 0.5))

    def test_pole_strength_depends_on_a(self):
        strong = marginal_prior_pdf(1e-4, 1.0, 0.25, 0.5) / marginal_prior_pdf(1e-2, 1.0, 0.25, 0.5)
        none = marginal_prior_pdf(1e-4, 1.0, 1.0, 0.5) / marginal_prior_pdf(1e-2, 1.0, 1.0, 0.5)
        assert strong > 10
        assert none < 10

    def test_tail_ratio(self):
        ratio = marginal_prior_pdf(1e3, 1.0, 0.5, 0.5) / tail_rate(1e3, 1.0, 0.5, 0.5)
        assert ratio == pytest.approx(1.0, abs=0.01)

    @pytest.mark.parametrize("b", [0.25, 0.5, 1.0, 2.0])
    def test_tail_slope(self, b):
        grid = np.logspace(2, 4, 5)
        dens = [marginal_prior_pdf(x, 1.0, 0.5, b) for x in grid]
        slope = np.polyfit(np.log(grid), np.log(dens), 1)[0]
        assert slope == pytest.approx(-(1.0 + 2.0 * b), abs=0.05)

    def test_tail_rate_slope(self):
        slope = np.log(tail_rate(1e4, 1.0, 0.5, 0.5) / tail_rate(1e3, 1.0, 0.5, 0.5)) / np.log(10.0)
        assert slope == pytest.approx(-2.0, abs=1e-3)

    def test_tail_rate_pole(self):
        with pytest.raises(ParameterDomainError):
            tail_rate(0.0, 1.0, 0.5, 0.5)

    def test_invalid_parameters(self):
        with pytest.raises(ParameterDomainError):
            marginal_prior_pdf(1.0, 0.0, 0.5, 0.5)


class TestShrinkagePrior:
    def test_single_member_group_is_beta(self):
        kappa = np.array([0.01, 0.2, 0.5, 0.9, 0.999])
        for k in kappa:
            val = np.exp(shrinkage_prior_logpdf([k], 1.0, 1.0, 0.3, 1.7))
            assert val == pytest.approx(stats.beta.pdf(k, 1.7, 0.3), rel=1e-10)

    def test_two_member_group_normalizes(self):
        def dens(k2, k1):
            return np.exp(shrinkage_prior_logpdf([k1, k2], 1.0, 1.0, 1.5, 1.0))
        total, _ = integrate.dblquad(dens, 0, 1, 0, 1, epsabs=1e-7)
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_boundary_rejected(self):
        with pytest.raises(ParameterDomainError):
            shrinkage_prior_logpdf([0.0, 0.5], 1.0, 1.0, 0.5, 0.5)


class TestNormalMeans:
    def test_zero_observation(self):
        est = normal_means_posterior_estimate([0.0, 3.0], 1.0, 1.0, 0.5, 0.5, 0)
        assert est.value == 0.0 and est.method == "exact"

    def test_shrinks_toward_zero(self):
        y = [2.5, -1.0]
        m = normal_means_posterior_mean(y, 1.0, 1.0, 0.5, 0.5, 0)
        assert 0 < m < 2.5

    def test_odd_in_observation(self):
        plus = normal_means_posterior_mean([1.7], 1.0, 1.0, 0.5, 0.5, 0)
        minus = normal_means_posterior_mean([-1.7], 1.0, 1.0, 0.5, 0.5, 0)
        assert plus == pytest.approx(-minus, rel=1e-8)

    def test_large_signal_barely_shrunk(self):
        m = normal_means_posterior_mean([30.0], 1.0, 1.0, 0.5, 0.5, 0)
        assert m == pytest.approx(30.0, rel=0.01)

    def test_group_coupling(self):
        alone = normal_means_posterior_mean([5.0, 0.0], 0.2, 1.0, 0.05, 2.0, 0)
        together = normal_means_posterior_mean([5.0, 10.0], 0.2, 1.0, 0.05, 2.0, 0)
        assert alone < 0.6 * together

    def test_individualistic_regime(self):
        alone = normal_means_posterior_mean([5.0, 0.0], 0.2, 1.0, 0.05, 0.05, 0)
        together = normal_means_posterior_mean([5.0, 10.0], 0.2, 1.0, 0.05, 0.05, 0)
        assert abs(alone - together) < 0.1 * together

    def test_quadrature_reports_method(self):
        est = normal_means_posterior_estimate([1.0, 2.0], 1.0, 1.0, 0.5, 0.5, 1)
        assert est.method == "quadrature" and est.std_error >= 0

    def test_importance_sampling_beyond_three(self):
        rng = np.random.default_rng(0)
        est = normal_means_posterior_estimate([3.0, 0.0, 0.0, 0.0], 1.0, 1.0, 0.5, 0.5, 0,
                                              rng=rng, target_se=5e-3)
        assert est.method == "importance"
        assert 0 < est.value < 3.0
        assert est.std_error < 5e-3

    def test_importance_sampling_needs_generator(self):
        with pytest.raises(ParameterDomainError):
            normal_means_posterior_estimate([1.0] * 4, 1.0, 1.0, 0.5, 0.5, 0)

    def test_index_out_of_range(self):
        with pytest.raises(ParameterDomainError):
            normal_means_posterior_mean([1.0], 1.0, 1.0, 0.5, 0.5, 1)

    def test_importance_matches_quadrature(self):
        y = [1.5, -0.5]
        quad = normal_means_posterior_mean(y, 1.0, 1.0, 0.5, 0.5, 0, method="quadrature")
        est = normal_means_posterior_estimate(y, 1.0, 1.0, 0.5, 0.5, 0, rng=np.random.default_rng(4),
                                              target_se=2e-3, method="importance")
        assert est.method == "importance"
        assert est.value == pytest.approx(quad, abs=0.01)

    @pytest.mark.parametrize("y,method", [([1.0] * 4, "quadrature"), ([1.0], "simpson")])
    def test_method_checked(self, y, method):
        with pytest.raises(ParameterDomainError):
            normal_means_posterior_mean(y, 1.0, 1.0, 0.5, 0.5, 0, method=method)


class TestShrinkageProbability:
    def test_complement(self):
        lo = shrinkage_posterior_probability([2.0], 1.0, 1.0, 0.5, 0.5, 0, 0.5)
        hi = shrinkage_posterior_probability([2.0], 1.0, 1.0, 0.5, 0.5, 0, 0.5, upper=True)
        assert 0 < lo < 1
        assert lo + hi == pytest.approx(1.0)

    def test_monotone_in_threshold(self):
        probs = [shrinkage_posterior_probability([1.0, 0.5], 1.0, 1.0, 0.5, 0.5, 0, t) for t in (0.2, 0.5, 0.8)]
        assert probs[0] < probs[1] < probs[2]

    def test_strong_signal_little_shrinkage(self):
        assert shrinkage_posterior_probability([8.0], 1.0, 1.0, 0.5, 0.5, 0, 0.1) > 0.9

    def test_importance_matches_quadrature(self):
        quad = shrinkage_posterior_probability([1.0, 0.5], 1.0, 1.0, 0.5, 0.5, 0, 0.5)
        sampled = shrinkage_posterior_probability([1.0, 0.5], 1.0, 1.0, 0.5, 0.5, 0, 0.5,
                                                  rng=np.random.default_rng(5), target_se=2e-3,
                                                  method="importance")
        assert sampled == pytest.approx(quad, abs=0.01)

    def test_large_observation_escapes_shrinkage(self):
        # two groups of five, only y_11 non-zero; the five-member group goes through importance sampling
        rng = np.random.default_rng(6)
        probs = [
            shrinkage_posterior_probability([y11, 0.0, 0.0, 0.0, 0.0], 0.1, 1.0, 0.5, 0.5, 0, 0.5,
                                            rng=rng, target_se=2e-3)
            for y11 in (2.0, 5.0, 10.0, 20.0)
        ]
        assert probs[0] < probs[1]
        assert np.all(np.diff(probs) > -0.01)
        assert probs[-1] > 0.95

    def test_null_group_shrinks_harder_as_b_grows(self):
        eps = 1.0 / (1.0 + 0.1 * 27.0)
        rng = np.random.default_rng(7)
        probs = [
            shrinkage_posterior_probability([0.0, 0.0, 0.0], 0.1, 1.0, 0.5, b, 0, eps,
                                            rng=rng, method="importance")
            for b in (1.0, 4.0, 16.0, 64.0)
        ]
        assert probs[0] > probs[1]
        assert np.all(np.diff(probs) < 1e-3)
        assert probs[-1] < 1e-3

    def test_threshold_domain(self):
        with pytest.raises(ParameterDomainError):
            shrinkage_posterior_probability([1.0], 1.0, 1.0, 0.5, 0.5, 0, 1.0)
