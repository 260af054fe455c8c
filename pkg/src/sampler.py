"""
Blocked Gibbs sampler for GIGG regression.

Sweep order: α, β, λ², γ², τ², ν, σ². Full conditionals:
    α   | · ~ N((CᵀC)⁻¹Cᵀ(y - Xβ), σ²(CᵀC)⁻¹)
    β   | · ~ N(Q⁻¹Xᵀ(y - Cα)/σ², Q⁻¹),  Q = XᵀX/σ² + diag(1/(τ²γ²λ²))
    λ²  | · ~ IG(b_g + 1/2, 1 + β²/(2τ²γ_g²))
    γ⁻² | · ~ GIG(p_g/2 - a_g, Σ_j β²/(τ²λ²), 2)
    τ²  | · ~ IG((p + 1)/2, Σ β²/(2γ²λ²) + 1/ν)
    ν   | · ~ IG(1, 1/τ² + 1/σ²)
    σ²  | · ~ IG((n + 1)/2, RSS/2 + 1/ν)

The half-Cauchy prior on τ is carried by the auxiliary ν. Every scale is
floored at SCALE_FLOOR and capped at SCALE_CAP after it is drawn.
"""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.linalg import lapack
from tqdm import tqdm

from .distributions import SCALE_CAP, SCALE_FLOOR, GigParams, basic_sample, gig_sample
from .errors import FactorizationError, NumericError, ParameterDomainError, SamplerError
from .mmle import MmleSettings, ScaleTrace, mmle_iterate
from .model import GroupedDesign, Hyperparameters

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------
DEFAULT_BURN_IN = 10_000
DEFAULT_DRAWS = 10_000
BETA_STRATEGIES = ("auto", "direct", "woodbury")
HYPER_MODES = ("fixed", "mmle_b")
SEED_MAX = 2**64 - 1


def _clip_scale(x):
    return np.clip(x, SCALE_FLOOR, SCALE_CAP)


# ---------------------------------------------------------------------------
# State and configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GiggState:
    alpha: np.ndarray
    beta: np.ndarray
    tau2: float
    sigma2: float
    nu: float
    gamma2: np.ndarray
    lambda2: np.ndarray

    @classmethod
    def initial(cls, design: GroupedDesign) -> "GiggState":
        """α = 0, β = 0, unit scales, τ² = ν = 1, σ² = var(y)."""
        sigma2 = float(np.var(design.y, ddof=1)) if design.n > 1 else 1.0
        return cls(
            alpha=np.zeros(design.q),
            beta=np.zeros(design.p),
            tau2=1.0,
            sigma2=float(_clip_scale(sigma2 if sigma2 > 0 else 1.0)),
            nu=1.0,
            gamma2=np.ones(design.G),
            lambda2=np.ones(design.p),
        )

    def check(self, design: GroupedDesign) -> None:
        if self.alpha.shape != (design.q,) or self.beta.shape != (design.p,):
            raise ParameterDomainError("state coefficient lengths do not match the design")
        if self.gamma2.shape != (design.G,) or self.lambda2.shape != (design.p,):
            raise ParameterDomainError("state scale lengths do not match the design")
        scales = np.concatenate([[self.tau2, self.sigma2, self.nu], self.gamma2, self.lambda2])
        if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
            raise NumericError("state has a non-positive or non-finite scale")
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.beta))):
            raise NumericError("state has non-finite coefficients")


@dataclass(frozen=True)
class SamplerConfig:
    """Chain length, seeding and sampler options.

    sigma2_prior (shape, rate) of (0, 0) is the Jeffreys prior 1/σ²; positive
    values give a proper inverse-gamma prior. fixed_tau2 / fixed_sigma2
    hold the corresponding parameter at the given value.
    """

    burn_in: int = DEFAULT_BURN_IN
    draws: int = DEFAULT_DRAWS
    thin: int = 1
    seed: int = 0
    beta_strategy: str = "auto"
    hyper_mode: str = "fixed"
    mmle: MmleSettings = field(default_factory=MmleSettings)
    sigma2_prior: tuple[float, float] = (0.0, 0.0)
    fixed_tau2: float | None = None
    fixed_sigma2: float | None = None
    progress: bool = False

    def __post_init__(self):
        if self.burn_in < 0:
            raise ParameterDomainError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.draws < 1 or self.thin < 1:
            raise ParameterDomainError(f"draws and thin must be >= 1, got {self.draws}, {self.thin}")
        if not 0 <= int(self.seed) <= SEED_MAX:
            raise ParameterDomainError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.beta_strategy not in BETA_STRATEGIES:
            raise ParameterDomainError(f"beta_strategy must be one of {BETA_STRATEGIES}")
        if self.hyper_mode not in HYPER_MODES:
            raise ParameterDomainError(f"hyper_mode must be one of {HYPER_MODES}")
        shape, rate = self.sigma2_prior
        if shape < 0 or rate < 0 or (shape == 0) != (rate == 0):
            raise ParameterDomainError(f"sigma2_prior must be (0, 0) or positive, got {self.sigma2_prior}")
        for name in ("fixed_tau2", "fixed_sigma2"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ParameterDomainError(f"{name} must be positive, got {value}")

    def to_dict(self) -> dict:
        return {
            "burn_in": self.burn_in,
            "draws": self.draws,
            "thin": self.thin,
            "seed": int(self.seed),
            "beta_strategy": self.beta_strategy,
            "hyper_mode": self.hyper_mode,
            "mmle": {
                "estimate_a": self.mmle.estimate_a,
                "tol": self.mmle.tol,
                "max_iters": self.mmle.max_iters,
                "mc_draws": self.mmle.mc_draws,
                "period": self.mmle.period,
            },
            "sigma2_prior": list(self.sigma2_prior),
            "fixed_tau2": self.fixed_tau2,
            "fixed_sigma2": self.fixed_sigma2,
        }


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained draws of one chain.

    scalar_draws columns are (τ², σ², ν); scale_draws holds γ² (G columns)
    followed by λ² (p columns). wall_time is kept in memory only.
    """

    beta_draws: np.ndarray
    alpha_draws: np.ndarray
    scalar_draws: np.ndarray
    scale_draws: np.ndarray
    config: SamplerConfig
    hyper: Hyperparameters
    x_names: list[str]
    c_names: list[str]
    group_labels: list[str]
    group_index: np.ndarray
    wall_time: float = 0.0

    @property
    def n_draws(self) -> int:
        return self.beta_draws.shape[0]

    @property
    def tau2(self) -> np.ndarray:
        return self.scalar_draws[:, 0]

    @property
    def sigma2(self) -> np.ndarray:
        return self.scalar_draws[:, 1]

    @property
    def nu(self) -> np.ndarray:
        return self.scalar_draws[:, 2]

    @property
    def gamma2(self) -> np.ndarray:
        return self.scale_draws[:, : len(self.group_labels)]

    @property
    def lambda2(self) -> np.ndarray:
        return self.scale_draws[:, len(self.group_labels):]

    def column_names(self) -> list[str]:
        return (
            [f"beta[{n}]" for n in self.x_names]
            + [f"alpha[{n}]" for n in self.c_names]
            + ["tau2", "sigma2", "nu"]
            + [f"gamma2[{g}]" for g in self.group_labels]
            + [f"lambda2[{n}]" for n in self.x_names]
        )

    def matrix(self) -> np.ndarray:
        """All draws as one (draws x columns) matrix ordered as column_names()."""
        return np.hstack([self.beta_draws, self.alpha_draws, self.scalar_draws, self.scale_draws])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.matrix(), columns=self.column_names())


# ---------------------------------------------------------------------------
# Design cache
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignCache:
    """Quantities of the design reused in every sweep."""

    ctc_chol: np.ndarray | None
    xtx: np.ndarray

    @classmethod
    def build(cls, design: GroupedDesign) -> "DesignCache":
        chol = None
        if design.q:
            chol = _cholesky(design.C.T @ design.C, "C^T C")
        return cls(ctc_chol=chol, xtx=design.X.T @ design.X)


def _cholesky(matrix: np.ndarray, what: str) -> np.ndarray:
    """Lower Cholesky factor; FactorizationError names the failing pivot."""
    chol, info = lapack.dpotrf(matrix, lower=1, clean=1)
    if info > 0:
        raise FactorizationError(what, int(info))
    if info < 0:
        raise NumericError(f"invalid argument {-info} to the Cholesky routine of {what}")
    return chol


# ---------------------------------------------------------------------------
# Full-conditional updates
# ---------------------------------------------------------------------------

def update_alpha(state: GiggState, design: GroupedDesign, rng: np.random.Generator,
                 cache: DesignCache | None = None) -> GiggState:
    """Draw α from its normal full conditional; no-op when C is empty."""
    if design.q == 0:
        return state
    chol = cache.ctc_chol if cache is not None else _cholesky(design.C.T @ design.C, "C^T C")
    rhs = design.C.T @ (design.y - design.X @ state.beta)
    mean = linalg.cho_solve((chol, True), rhs)
    z = rng.standard_normal(design.q)
    noise = linalg.solve_triangular(chol, z, lower=True, trans="T")
    return replace(state, alpha=mean + np.sqrt(state.sigma2) * noise)


def prior_variances(state: GiggState, design: GroupedDesign) -> np.ndarray:
    """d_gj = τ² γ_g² λ_gj², floored and capped."""
    return _clip_scale(state.tau2 * state.gamma2[design.group_index] * state.lambda2)


def _beta_direct(design, resid, d, sigma2, rng, xtx):
    Q = xtx / sigma2 + np.diag(1.0 / d)
    chol = _cholesky(Q, "Q")
    v = design.X.T @ resid / sigma2 + chol @ rng.standard_normal(design.p)
    return linalg.cho_solve((chol, True), v)


def _beta_woodbury(design, resid, d, sigma2, rng):
    """Linear-in-p draw: u ~ N(0, D), δ ~ N(0, I), v = Φu + δ,
    (ΦDΦᵀ + I)w = r - v, β = u + DΦᵀw with Φ = X/σ, r = (y - Cα)/σ."""
    sigma = np.sqrt(sigma2)
    phi = design.X / sigma
    u = np.sqrt(d) * rng.standard_normal(design.p)
    delta = rng.standard_normal(design.n)
    v = phi @ u + delta
    M = (phi * d) @ phi.T + np.eye(design.n)
    chol = _cholesky(M, "Phi D Phi^T + I")
    w = linalg.cho_solve((chol, True), resid / sigma - v)
    return u + d * (phi.T @ w)


def resolve_beta_strategy(strategy: str, n: int, p: int) -> str:
    if strategy == "auto":
        return "woodbury" if p > 2 * n else "direct"
    return strategy


def update_beta(state: GiggState, design: GroupedDesign, rng: np.random.Generator,
                strategy: str = "auto", cache: DesignCache | None = None) -> GiggState:
    """Draw β from N(Q⁻¹Xᵀ(y - Cα)/σ², Q⁻¹)."""
    resid = design.y - design.C @ state.alpha if design.q else design.y
    d = prior_variances(state, design)
    if resolve_beta_strategy(strategy, design.n, design.p) == "woodbury":
        beta = _beta_woodbury(design, resid, d, state.sigma2, rng)
    else:
        xtx = cache.xtx if cache is not None else design.X.T @ design.X
        beta = _beta_direct(design, resid, d, state.sigma2, rng, xtx)
    return replace(state, beta=beta)


def update_lambda2(state: GiggState, design: GroupedDesign, hyper: Hyperparameters,
                   rng: np.random.Generator) -> GiggState:
    gi = design.group_index
    rate = 1.0 + state.beta**2 / (2.0 * state.tau2 * state.gamma2[gi])
    lambda2 = basic_sample(rng, "inverse_gamma", hyper.b[gi] + 0.5, rate)
    return replace(state, lambda2=_clip_scale(np.atleast_1d(lambda2)))


def update_gamma2(state: GiggState, design: GroupedDesign, hyper: Hyperparameters,
                  rng: np.random.Generator) -> GiggState:
    psi = np.bincount(
        design.group_index, weights=state.beta**2 / state.lambda2, minlength=design.G,
    ) / state.tau2
    gamma2 = np.empty(design.G)
    for g in range(design.G):
        try:
            params = GigParams.floored(design.group_sizes[g] / 2.0 - hyper.a[g], psi[g], 2.0)
            gamma2[g] = 1.0 / gig_sample(rng, params)
        except ParameterDomainError as exc:
            raise NumericError(f"GIG update of group {g}: {exc}") from exc
    return replace(state, gamma2=_clip_scale(gamma2))


def update_local_scales(state: GiggState, design: GroupedDesign, hyper: Hyperparameters,
                        rng: np.random.Generator) -> GiggState:
    """Refresh every λ_gj² and then every γ_g²."""
    state = update_lambda2(state, design, hyper, rng)
    return update_gamma2(state, design, hyper, rng)


def update_global(state: GiggState, design: GroupedDesign, rng: np.random.Generator,
                  sigma2_prior: tuple[float, float] = (0.0, 0.0),
                  fixed_tau2: float | None = None,
                  fixed_sigma2: float | None = None) -> GiggState:
    """Refresh τ², ν and σ² in that order."""
    if fixed_tau2 is None:
        quad = np.sum(state.beta**2 / (state.gamma2[design.group_index] * state.lambda2))
        tau2 = basic_sample(rng, "inverse_gamma", (design.p + 1) / 2.0, 0.5 * quad + 1.0 / state.nu)
    else:
        tau2 = fixed_tau2
    tau2 = float(_clip_scale(tau2))

    nu = float(_clip_scale(basic_sample(rng, "inverse_gamma", 1.0, 1.0 / tau2 + 1.0 / state.sigma2)))

    if fixed_sigma2 is None:
        fitted = design.X @ state.beta
        if design.q:
            fitted = fitted + design.C @ state.alpha
        rss = float(np.sum((design.y - fitted) ** 2))
        shape0, rate0 = sigma2_prior
        sigma2 = basic_sample(
            rng, "inverse_gamma", (design.n + 1) / 2.0 + shape0, 0.5 * rss + 1.0 / nu + rate0,
        )
    else:
        sigma2 = fixed_sigma2
    return replace(state, tau2=tau2, nu=nu, sigma2=float(_clip_scale(sigma2)))


def gibbs_sweep(state: GiggState, design: GroupedDesign, hyper: Hyperparameters,
                config: SamplerConfig, rng: np.random.Generator,
                cache: DesignCache | None = None) -> GiggState:
    """One full sweep in the order α, β, λ², γ², τ², ν, σ²."""
    state = update_alpha(state, design, rng, cache)
    state = update_beta(state, design, rng, config.beta_strategy, cache)
    state = update_local_scales(state, design, hyper, rng)
    return update_global(
        state, design, rng, config.sigma2_prior, config.fixed_tau2, config.fixed_sigma2,
    )


# ---------------------------------------------------------------------------
# Chain driver
# ---------------------------------------------------------------------------

def chain_seed(seed: int, chain: int) -> np.random.SeedSequence:
    """Independent stream for chain m derived from the master seed."""
    return np.random.SeedSequence(int(seed), spawn_key=(int(chain),))


def run_chain(
    design: GroupedDesign,
    hyper: Hyperparameters,
    config: SamplerConfig,
    chain: int = 0,
    initial: GiggState | None = None,
) -> PosteriorDraws:
    """Run burn_in + draws * thin sweeps and keep every thin-th post-burn-in state.

    When config.hyper_mode is "mmle_b" the hyperparameters are updated on
    the config.mmle.period burn-in sweep grid once mmle.mc_draws sweeps have
    been drawn under the current values, then frozen for the retained draws.

    Raises:
        SamplerError: a sub-update failed; carries the sweep index.
    """
    if hyper.G != design.G:
        raise ParameterDomainError(f"hyperparameters cover {hyper.G} groups, design has {design.G}")
    rng = np.random.default_rng(chain_seed(config.seed, chain))
    state = initial if initial is not None else GiggState.initial(design)
    state.check(design)
    cache = DesignCache.build(design)
    strategy = resolve_beta_strategy(config.beta_strategy, design.n, design.p)
    log.debug("chain %d: n=%d p=%d G=%d beta strategy=%s", chain, design.n, design.p, design.G, strategy)

    tune = config.hyper_mode == "mmle_b"
    trace = ScaleTrace(design.group_sizes, config.mmle.mc_draws) if tune else None
    mmle_iters = 0
    converged = not tune

    total = config.burn_in + config.draws * config.thin
    beta_out = np.empty((config.draws, design.p))
    alpha_out = np.empty((config.draws, design.q))
    scalar_out = np.empty((config.draws, 3))
    scale_out = np.empty((config.draws, design.G + design.p))
    kept = 0

    start = time.perf_counter()
    for sweep in tqdm(range(total), desc=f"chain {chain}", disable=not config.progress, leave=False):
        try:
            state = gibbs_sweep(state, design, hyper, config, rng, cache)
        except (NumericError, ParameterDomainError, np.linalg.LinAlgError) as exc:
            raise SamplerError(sweep, exc) from exc

        if sweep < config.burn_in:
            if tune and not converged:
                trace.push(state.gamma2, state.lambda2)
                if (sweep + 1) % config.mmle.period == 0 and trace.full:
                    try:
                        hyper, converged = mmle_iterate(trace, hyper, config.mmle)
                    except NumericError as exc:
                        raise SamplerError(sweep, exc) from exc
                    trace.clear()
                    mmle_iters += 1
                    if converged:
                        log.info("chain %d: MMLE converged after %d updates, b=%s",
                                 chain, mmle_iters, np.array2string(hyper.b, precision=4))
                    elif mmle_iters >= config.mmle.max_iters:
                        log.warning("chain %d: MMLE stopped after %d updates without converging",
                                    chain, mmle_iters)
                        converged = True
            continue

        if (sweep - config.burn_in + 1) % config.thin == 0:
            beta_out[kept] = state.beta
            alpha_out[kept] = state.alpha
            scalar_out[kept] = (state.tau2, state.sigma2, state.nu)
            scale_out[kept, : design.G] = state.gamma2
            scale_out[kept, design.G:] = state.lambda2
            kept += 1

    if tune and mmle_iters < config.mmle.max_iters and not converged:
        log.warning("chain %d: MMLE did not converge during burn-in (%d updates)", chain, mmle_iters)

    wall = time.perf_counter() - start
    log.info("chain %d: %d sweeps in %.1fs", chain, total, wall)
    return PosteriorDraws(
        beta_draws=beta_out,
        alpha_draws=alpha_out,
        scalar_draws=scalar_out,
        scale_draws=scale_out,
        config=config,
        hyper=hyper,
        x_names=list(design.x_names),
        c_names=list(design.c_names),
        group_labels=list(design.group_labels),
        group_index=design.group_index,
        wall_time=wall,
    )
