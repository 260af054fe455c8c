"""
Joint-distribution ("getting it right") check of the Gibbs sampler.

The marginal-conditional simulator draws (θ, y) from the prior forward;
the successive-conditional simulator alternates y | θ with one Gibbs sweep
θ | y. With correct full conditionals both leave the joint prior
invariant, so any test statistic g(θ) has the same mean under both.

A proper inverse-gamma prior on σ² is used in place of the Jeffreys prior
and the design has no adjustment covariates, so the joint is proper.
"""

import logging
from typing import Callable, Sequence

import numpy as np
from tqdm import tqdm

from .diagnostics import batch_means_se
from .distributions import SCALE_CAP, SCALE_FLOOR
from .errors import ParameterDomainError
from .model import GroupedDesign, Hyperparameters, sample_prior_scales
from .sampler import GiggState, update_beta, update_gamma2, update_global, update_lambda2

log = logging.getLogger(__name__)

DEFAULT_SIGMA2_PRIOR = (3.0, 2.0)
STATISTIC_NAMES = (
    "tanh(beta_1)", "tanh(beta_group2)", "log(tau2)", "log(sigma2)", "log(gamma2_1)", "log(lambda2_11)",
)

Update = Callable[[GiggState, GroupedDesign, Hyperparameters, np.random.Generator], GiggState]


def statistic_names() -> list[str]:
    return list(STATISTIC_NAMES) + [f"{name}^2" for name in STATISTIC_NAMES]


def joint_statistics(beta, tau2, sigma2, gamma2, lambda2, second_group_start: int) -> np.ndarray:
    """Bounded or log-scale statistics and their squares; leading axis is the draw."""
    base = np.column_stack([
        np.tanh(beta[..., 0]),
        np.tanh(beta[..., second_group_start]),
        np.log(tau2),
        np.log(sigma2),
        np.log(gamma2[..., 0]),
        np.log(lambda2[..., 0]),
    ])
    return np.hstack([base, base**2])


def _clip(x):
    return np.clip(x, SCALE_FLOOR, SCALE_CAP)


def _draw_prior(rng, X, group_sizes, hyper, sigma2_prior, size):
    sizes = np.asarray(group_sizes, dtype=int)
    index = np.repeat(np.arange(sizes.size), sizes)
    shape0, rate0 = sigma2_prior
    sigma2 = _clip(rate0 / rng.gamma(shape0, 1.0, size))
    nu = _clip((1.0 / sigma2) / rng.gamma(0.5, 1.0, size))
    tau2 = _clip((1.0 / nu) / rng.gamma(0.5, 1.0, size))
    gamma2, lambda2 = sample_prior_scales(rng, sizes, hyper, size)
    gamma2, lambda2 = _clip(gamma2), _clip(lambda2)
    sd = np.sqrt(tau2[:, None] * gamma2[:, index] * lambda2)
    beta = sd * rng.standard_normal((size, index.size))
    return beta, tau2, sigma2, nu, gamma2, lambda2


def _check_args(X, group_sizes, hyper, sigma2_prior):
    sizes = np.asarray(group_sizes, dtype=int)
    if sizes.size < 2:
        raise ParameterDomainError("the joint check needs at least two groups")
    if sizes.sum() != np.asarray(X).shape[1] or hyper.G != sizes.size:
        raise ParameterDomainError("group sizes, X and hyperparameters disagree")
    if min(sigma2_prior) <= 0:
        raise ParameterDomainError("the joint check needs a proper sigma2 prior")
    return int(sizes[0])


def simulate_prior_marginal(
    rng: np.random.Generator,
    X: np.ndarray,
    group_sizes,
    hyper: Hyperparameters,
    n_draws: int,
    sigma2_prior: tuple[float, float] = DEFAULT_SIGMA2_PRIOR,
) -> np.ndarray:
    """Independent prior draws of the test statistics (n_draws x 12)."""
    second = _check_args(X, group_sizes, hyper, sigma2_prior)
    beta, tau2, sigma2, _, gamma2, lambda2 = _draw_prior(rng, X, group_sizes, hyper, sigma2_prior, n_draws)
    return joint_statistics(beta, tau2, sigma2, gamma2, lambda2, second)


def default_updates(sigma2_prior: tuple[float, float] = DEFAULT_SIGMA2_PRIOR) -> list[Update]:
    """β, λ², γ², then (τ², ν, σ²): one sweep of the regression sampler without C."""
    return [
        lambda s, d, h, r: update_beta(s, d, r, "direct"),
        update_lambda2,
        update_gamma2,
        lambda s, d, h, r: update_global(s, d, r, sigma2_prior),
    ]


def simulate_successive_conditional(
    rng: np.random.Generator,
    X: np.ndarray,
    group_sizes,
    hyper: Hyperparameters,
    n_sweeps: int,
    sigma2_prior: tuple[float, float] = DEFAULT_SIGMA2_PRIOR,
    updates: Sequence[Update] | None = None,
    progress: bool = False,
) -> np.ndarray:
    """Alternate y | θ and one Gibbs sweep; returns statistics per sweep."""
    second = _check_args(X, group_sizes, hyper, sigma2_prior)
    X = np.asarray(X, dtype=float)
    sizes = np.asarray(group_sizes, dtype=int)
    updates = list(updates) if updates is not None else default_updates(sigma2_prior)

    beta, tau2, sigma2, nu, gamma2, lambda2 = _draw_prior(rng, X, sizes, hyper, sigma2_prior, 1)
    state = GiggState(
        alpha=np.zeros(0), beta=beta[0], tau2=float(tau2[0]), sigma2=float(sigma2[0]),
        nu=float(nu[0]), gamma2=gamma2[0], lambda2=lambda2[0],
    )
    n = X.shape[0]
    out = np.empty((n_sweeps, 2 * len(STATISTIC_NAMES)))
    for sweep in tqdm(range(n_sweeps), desc="joint check", disable=not progress):
        y = X @ state.beta + np.sqrt(state.sigma2) * rng.standard_normal(n)
        design = GroupedDesign(y=y, C=np.empty((n, 0)), X=X, group_sizes=sizes)
        for update in updates:
            state = update(state, design, hyper, rng)
        out[sweep] = joint_statistics(
            state.beta[None], np.array([state.tau2]), np.array([state.sigma2]),
            state.gamma2[None], state.lambda2[None], second,
        )[0]
    return out


def simulate_successive_chains(
    rng: np.random.Generator,
    X: np.ndarray,
    group_sizes,
    hyper: Hyperparameters,
    n_chains: int,
    n_sweeps: int,
    sigma2_prior: tuple[float, float] = DEFAULT_SIGMA2_PRIOR,
    updates: Sequence[Update] | None = None,
) -> np.ndarray:
    """Independent successive-conditional chains, each started from a prior draw.

    Returns an (n_chains, n_sweeps, 12) array for `geweke_z_scores`.
    """
    if n_chains < 2:
        raise ParameterDomainError("between-chain errors need at least two chains")
    log.info("joint check: %d chains x %d sweeps", n_chains, n_sweeps)
    return np.stack([
        simulate_successive_conditional(rng, X, group_sizes, hyper, n_sweeps, sigma2_prior, updates)
        for _ in range(n_chains)
    ])


def _successive_mean_se(successive: np.ndarray, k: int) -> tuple[float, float]:
    if successive.ndim == 3:
        means = successive[:, :, k].mean(axis=1)
        return float(means.mean()), float(np.std(means, ddof=1) / np.sqrt(means.size))
    return float(successive[:, k].mean()), batch_means_se(successive[:, k])


def geweke_z_scores(forward: np.ndarray, successive: np.ndarray) -> np.ndarray:
    """(mean_forward - mean_successive) / Monte Carlo standard error.

    Forward draws are independent. A single successive chain (2-D input)
    gets a batch-means standard error with ⌊√N⌋-long batches; independent
    chains (3-D input, chain axis first) use the spread of the chain means.
    """
    forward = np.atleast_2d(forward)
    successive = np.asarray(successive, dtype=float)
    if successive.ndim not in (2, 3) or successive.shape[-1] != forward.shape[1]:
        raise ParameterDomainError("successive draws must be (sweeps, k) or (chains, sweeps, k)")
    z = np.empty(forward.shape[1])
    for k in range(forward.shape[1]):
        var_f = np.var(forward[:, k], ddof=1) / forward.shape[0]
        mean_s, se_s = _successive_mean_se(successive, k)
        z[k] = (forward[:, k].mean() - mean_s) / np.sqrt(var_f + se_s**2)
    log.debug("joint-check z-scores: %s", np.array2string(z, precision=2))
    return z
