"""Tests for src/sampler.py — full conditionals, chain driver, seeding and options."""

from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from src import sampler
from src.diagnostics import batch_means_se
from src.errors import FactorizationError, NumericError, ParameterDomainError, SamplerError
from src.mmle import MmleSettings
from src.model import GroupedDesign, Hyperparameters, normal_means_posterior_mean
from src.sampler import (
    GiggState,
    SamplerConfig,
    resolve_beta_strategy,
    run_chain,
    update_alpha,
    update_beta,
    update_gamma2,
    update_global,
    update_lambda2,
)


def _short(**kwargs) -> SamplerConfig:
    base = {"burn_in": 200, "draws": 300, "seed": 1}
    base.update(kwargs)
    return SamplerConfig(**base)


class TestSamplerConfig:
    def test_defaults(self):
        cfg = SamplerConfig()
        assert cfg.burn_in == 10_000 and cfg.draws == 10_000 and cfg.thin == 1

    @pytest.mark.parametrize("kwargs", [
        {"draws": 0},
        {"thin": 0},
        {"burn_in": -1},
        {"seed": -3},
        {"beta_strategy": "qr"},
        {"hyper_mode": "mmle_ab"},
        {"sigma2_prior": (1.0, 0.0)},
        {"fixed_tau2": 0.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterDomainError):
            SamplerConfig(**kwargs)

    def test_to_dict_has_no_progress_flag(self):
        d = SamplerConfig(seed=9).to_dict()
        assert d["seed"] == 9 and "progress" not in d


class TestStrategy:
    def test_auto_switches_on_width(self):
        assert resolve_beta_strategy("auto", 20, 50) == "woodbury"
        assert resolve_beta_strategy("auto", 40, 6) == "direct"
        assert resolve_beta_strategy("woodbury", 40, 6) == "woodbury"


class TestUpdateAlpha:
    def test_no_adjustment_is_noop(self, wide_design, rng):
        state = GiggState.initial(wide_design)
        assert update_alpha(state, wide_design, rng) is state

    def test_draws_center_on_least_squares(self, small_design, rng):
        state = replace(GiggState.initial(small_design), sigma2=1e-6)
        C = small_design.C
        expected = np.linalg.lstsq(C, small_design.y, rcond=None)[0]
        alpha = update_alpha(state, small_design, rng).alpha
        assert np.allclose(alpha, expected, atol=1e-2)


class TestUpdateBeta:
    @pytest.fixture
    def identity_design(self):
        y = np.array([1.0, 2.0, -1.0, 0.5])
        return GroupedDesign(y=y, C=np.empty((4, 0)), X=np.eye(4), group_sizes=[2, 2])

    @pytest.mark.parametrize("strategy", ["direct", "woodbury"])
    def test_conjugate_identity_case(self, identity_design, strategy):
        # unit prior variance and noise: β | y ~ N(y/2, 1/2)
        rng = np.random.default_rng(4)
        state = GiggState.initial(identity_design)
        state = replace(state, sigma2=1.0, tau2=1.0)
        draws = np.array([update_beta(state, identity_design, rng, strategy).beta for _ in range(6000)])
        assert np.allclose(draws.mean(axis=0), identity_design.y / 2, atol=0.05)
        assert np.allclose(draws.var(axis=0), 0.5, rtol=0.08)

    @pytest.mark.parametrize("strategy", ["direct", "woodbury"])
    def test_matches_exact_posterior(self, wide_design, strategy):
        gen = np.random.default_rng(21)
        state = replace(
            GiggState.initial(wide_design),
            tau2=0.5, sigma2=1.3, lambda2=gen.uniform(0.5, 2.0, wide_design.p),
        )
        d = state.tau2 * state.lambda2
        X, y = wide_design.X, wide_design.y
        Q = X.T @ X / state.sigma2 + np.diag(1.0 / d)
        cov = np.linalg.inv(Q)
        mean = cov @ (X.T @ y) / state.sigma2

        rng = np.random.default_rng(22)
        n_draws = 4000
        draws = np.array([update_beta(state, wide_design, rng, strategy).beta for _ in range(n_draws)])
        se = np.sqrt(np.diag(cov) / n_draws)
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 5 * se)
        assert np.allclose(draws.var(axis=0), np.diag(cov), rtol=0.12)


class TestScaleUpdates:
    def test_lambda_prior_when_beta_is_zero(self, small_design, half_hyper):
        # β = 0 leaves λ² | · ~ IG(b + 1/2, 1)
        rng = np.random.default_rng(5)
        state = GiggState.initial(small_design)
        draws = np.concatenate([
            update_lambda2(state, small_design, half_hyper, rng).lambda2 for _ in range(3000)
        ])
        assert stats.kstest(draws, stats.invgamma(1.0).cdf).pvalue > 1e-4

    def test_gamma_update_survives_zero_rate(self, rng):
        gen = np.random.default_rng(6)
        design = GroupedDesign(y=gen.standard_normal(10), C=np.empty((10, 0)),
                               X=gen.standard_normal((10, 2)), group_sizes=[1, 1])
        hyper = Hyperparameters.uniform(2, 0.1, 0.5)
        state = GiggState.initial(design)
        out = update_gamma2(state, design, hyper, rng)
        assert np.all(np.isfinite(out.gamma2)) and np.all(out.gamma2 > 0)

    def test_global_fixed_values_held(self, small_design, rng):
        state = GiggState.initial(small_design)
        out = update_global(state, small_design, rng, fixed_tau2=0.3, fixed_sigma2=2.0)
        assert out.tau2 == 0.3 and out.sigma2 == 2.0
        assert out.nu > 0


class TestCholesky:
    def test_not_positive_definite(self):
        with pytest.raises(FactorizationError) as info:
            sampler._cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]), "Q")
        assert info.value.pivot == 2


class TestRunChain:
    def test_shapes_and_names(self, small_design, half_hyper):
        draws = run_chain(small_design, half_hyper, _short(draws=50, burn_in=10))
        assert draws.beta_draws.shape == (50, 6)
        assert draws.alpha_draws.shape == (50, 2)
        assert draws.to_frame().shape == (50, len(draws.column_names()))
        assert draws.column_names()[:2] == ["beta[x1]", "beta[x2]"]
        assert "gamma2[g2]" in draws.column_names()

    def test_same_seed_same_draws(self, small_design, half_hyper):
        a = run_chain(small_design, half_hyper, _short(draws=80, burn_in=20))
        b = run_chain(small_design, half_hyper, _short(draws=80, burn_in=20))
        assert np.array_equal(a.matrix(), b.matrix())

    def test_chains_are_independent_streams(self, small_design, half_hyper):
        a = run_chain(small_design, half_hyper, _short(draws=30, burn_in=5), chain=0)
        b = run_chain(small_design, half_hyper, _short(draws=30, burn_in=5), chain=1)
        assert not np.array_equal(a.matrix(), b.matrix())

    def test_recovers_strong_signal(self, small_design, half_hyper):
        draws = run_chain(small_design, half_hyper, _short(burn_in=500, draws=1000))
        means = draws.beta_draws.mean(axis=0)
        assert means[0] == pytest.approx(2.0, abs=0.5)
        assert np.all(np.abs(means[1:]) < 0.5)

    def test_fixed_parameters_are_constant(self, small_design, half_hyper):
        draws = run_chain(small_design, half_hyper, _short(fixed_tau2=0.01, fixed_sigma2=1.0, draws=40))
        assert np.all(draws.tau2 == 0.01) and np.all(draws.sigma2 == 1.0)

    def test_smaller_tau2_shrinks_more(self, small_design, half_hyper):
        tight = run_chain(small_design, half_hyper, _short(fixed_tau2=1e-4))
        loose = run_chain(small_design, half_hyper, _short(fixed_tau2=10.0))
        # null coefficients
        assert np.abs(tight.beta_draws[:, 1:].mean(axis=0)).sum() < np.abs(loose.beta_draws[:, 1:].mean(axis=0)).sum()

    def test_woodbury_chain_runs(self, wide_design):
        hyper = Hyperparameters.uniform(5, 0.05, 0.5)
        draws = run_chain(wide_design, hyper, _short(burn_in=50, draws=100))
        assert np.all(np.isfinite(draws.matrix()))

    def test_thinning_keeps_requested_count(self, small_design, half_hyper):
        draws = run_chain(small_design, half_hyper, _short(draws=20, thin=3, burn_in=5))
        assert draws.n_draws == 20

    def test_mmle_updates_b(self, small_design):
        hyper = Hyperparameters.uniform(2, 1.0 / small_design.n, 0.5)
        cfg = _short(burn_in=600, draws=50, hyper_mode="mmle_b",
                     mmle=MmleSettings(mc_draws=100, period=100))
        draws = run_chain(small_design, hyper, cfg)
        assert not np.allclose(draws.hyper.b, 0.5)
        assert np.all(draws.hyper.b > 0)
        assert np.allclose(draws.hyper.a, 1.0 / small_design.n)

    def test_mmle_waits_for_full_window(self, small_design):
        hyper = Hyperparameters.uniform(2, 1.0 / small_design.n, 0.5)
        cfg = _short(burn_in=150, draws=10, hyper_mode="mmle_b",
                     mmle=MmleSettings(mc_draws=200, period=100))
        assert np.all(run_chain(small_design, hyper, cfg).hyper.b == 0.5)

    def test_hyper_group_count_checked(self, small_design):
        with pytest.raises(ParameterDomainError):
            run_chain(small_design, Hyperparameters.uniform(3, 0.5, 0.5), _short())

    def test_failure_reports_sweep(self, small_design, half_hyper, monkeypatch):
        def broken(*args, **kwargs):
            raise NumericError("boom")
        monkeypatch.setattr(sampler, "update_beta", broken)
        with pytest.raises(SamplerError) as info:
            run_chain(small_design, half_hyper, _short())
        assert info.value.sweep == 0


class TestNormalMeansAgreement:
    @pytest.mark.slow
    def test_chain_matches_quadrature(self):
        gen = np.random.default_rng(3)
        for instance in range(5):
            y = gen.uniform(-3.0, 3.0, size=2)
            tau2 = float(gen.choice([0.1, 1.0]))
            design = GroupedDesign(y=y, C=np.empty((2, 0)), X=np.eye(2), group_sizes=[2])
            hyper = Hyperparameters.uniform(1, 0.5, 0.5)
            cfg = SamplerConfig(burn_in=2000, draws=40_000, seed=instance,
                                fixed_tau2=tau2, fixed_sigma2=1.0)
            column = run_chain(design, hyper, cfg).beta_draws[:, 0]
            expected = normal_means_posterior_mean(y, tau2, 1.0, 0.5, 0.5, 0)
            assert abs(column.mean() - expected) < 3.0 * batch_means_se(column), instance


class TestShrinkageInTau2:
    @pytest.mark.slow
    def test_posterior_mean_norm_decreases(self):
        y = np.array([1.5, -1.0, 0.8, 2.0, 0.3, -1.2, 0.5, 1.0, -0.7, 1.8])
        design = GroupedDesign(y=y, C=np.empty((10, 0)), X=np.eye(10), group_sizes=[5, 5])
        hyper = Hyperparameters.uniform(2, 0.5, 0.5)
        norms = []
        for tau2 in (1e-1, 1e-2, 1e-3, 1e-4):
            cfg = SamplerConfig(burn_in=1000, draws=20_000, seed=4, fixed_tau2=tau2, fixed_sigma2=1.0)
            norms.append(np.linalg.norm(run_chain(design, hyper, cfg).beta_draws.mean(axis=0)))
        assert np.all(np.diff(norms) < 0)


class TestConcentration:
    @pytest.mark.slow
    def test_null_shrinkage_grows_as_tau2_falls(self):
        design = GroupedDesign(y=np.zeros(10), C=np.empty((10, 0)), X=np.eye(10), group_sizes=[5, 5])
        hyper = Hyperparameters.uniform(2, 0.5, 0.5)
        probs = []
        for tau2 in (1e-1, 1e-2, 1e-3, 1e-4):
            cfg = SamplerConfig(burn_in=1000, draws=10_000, seed=8, fixed_tau2=tau2, fixed_sigma2=1.0)
            draws = run_chain(design, hyper, cfg)
            scale = draws.tau2[:, None] * draws.gamma2[:, draws.group_index] * draws.lambda2
            kappa = draws.sigma2[:, None] / (draws.sigma2[:, None] + scale)
            probs.append(np.mean(kappa >= 0.9))
        assert probs == sorted(probs)
        # γ²λ² is a squared Cauchy under a = b = 1/2, so P(κ ≥ 0.9) tops out near 0.98 here
        assert probs[-1] > 0.97
