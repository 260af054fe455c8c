"""
Regression data model and analytical views of the GIGG prior.

Model:
    y = Cα + Xβ + ε,  ε ~ N(0, σ² I)
    β_gj ~ N(0, τ² γ_g² λ_gj²),  γ_g² ~ Gamma(a_g, 1),  λ_gj² ~ IG(b_g, 1)

so u = τ² γ_g² λ_gj² is τ² times a beta prime(a_g, b_g) variate. The
functions here evaluate the implied marginal prior of β_gj, its
polynomial tail, the joint prior of the within-group shrinkage factors
κ_gj = σ²/(σ² + τ² γ_g² λ_gj²), and posterior summaries of κ in the
normal-means model (X = I).
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from .distributions import basic_sample, beta_prime_logpdf
from .errors import NumericError, ParameterDomainError

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------
MIXTURE_LOG_RANGE = (-60.0, 60.0)     # log-variance axis for the mixture integral
MIXTURE_RTOL = 1e-8
KAPPA_CLAMP = 1e-12
QUADRATURE_MAX_DIM = 3
POSTERIOR_METHODS = ("auto", "quadrature", "importance")
DEFAULT_IS_TARGET_SE = 1e-3
DEFAULT_IS_MAX_DRAWS = 2_000_000
IS_BATCH = 20_000


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupedDesign:
    """Response, adjustment covariates C and grouped shrinkage covariates X.

    Group g occupies the contiguous columns offsets[g] .. offsets[g] + p_g - 1
    of X.
    """

    y: np.ndarray
    C: np.ndarray
    X: np.ndarray
    group_sizes: np.ndarray
    x_names: list[str] = field(default_factory=list)
    c_names: list[str] = field(default_factory=list)
    group_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        n = y.shape[0]
        C = np.asarray(self.C, dtype=float).reshape(n, -1) if np.size(self.C) else np.empty((n, 0))
        sizes = np.asarray(self.group_sizes, dtype=int).ravel()
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "group_sizes", sizes)

        if n < 1:
            raise ParameterDomainError("design needs at least one observation")
        if X.ndim != 2 or X.shape[0] != n:
            raise ParameterDomainError(f"X must be {n} x p, got shape {X.shape}")
        if sizes.size == 0 or np.any(sizes < 1):
            raise ParameterDomainError(f"group sizes must be positive, got {sizes.tolist()}")
        if sizes.sum() != X.shape[1]:
            raise ParameterDomainError(
                f"group sizes sum to {sizes.sum()} but X has {X.shape[1]} columns"
            )
        for name, arr in (("y", y), ("X", X), ("C", C)):
            if not np.all(np.isfinite(arr)):
                raise ParameterDomainError(f"{name} contains non-finite values")
        if C.shape[1] and np.linalg.matrix_rank(C) < C.shape[1]:
            raise ParameterDomainError("adjustment covariates C are not of full column rank")

        if not self.x_names:
            object.__setattr__(self, "x_names", [f"x{j + 1}" for j in range(X.shape[1])])
        if not self.c_names:
            object.__setattr__(self, "c_names", [f"c{k + 1}" for k in range(C.shape[1])])
        if not self.group_labels:
            object.__setattr__(self, "group_labels", [f"g{g + 1}" for g in range(sizes.size)])

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[1]

    @property
    def G(self) -> int:
        return self.group_sizes.size

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.group_sizes)[:-1]])

    @property
    def group_index(self) -> np.ndarray:
        """Group number (0-based) of every column of X."""
        return np.repeat(np.arange(self.G), self.group_sizes)

    def group_slice(self, g: int) -> slice:
        start = int(self.offsets[g])
        return slice(start, start + int(self.group_sizes[g]))


@dataclass(frozen=True)
class Hyperparameters:
    """Per-group GIGG hyperparameters: a controls the pole, b the tails."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if a.shape != b.shape:
            raise ParameterDomainError(f"a and b lengths differ: {a.size} vs {b.size}")
        for name, arr in (("a", a), ("b", b)):
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ParameterDomainError(f"hyperparameter {name} must be positive and finite, got {arr}")

    @classmethod
    def uniform(cls, n_groups: int, a: float, b: float) -> "Hyperparameters":
        return cls(np.full(n_groups, float(a)), np.full(n_groups, float(b)))

    @property
    def G(self) -> int:
        return self.a.size

    def replace(self, a=None, b=None) -> "Hyperparameters":
        return Hyperparameters(self.a if a is None else a, self.b if b is None else b)


@dataclass(frozen=True)
class ShrinkageFactors:
    """Shrinkage factors κ_gj, each strictly inside (0, 1)."""

    kappa: np.ndarray

    def __post_init__(self):
        kappa = np.asarray(self.kappa, dtype=float)
        object.__setattr__(self, "kappa", kappa)
        if np.any(kappa <= 0) or np.any(kappa >= 1):
            raise ParameterDomainError("shrinkage factors must lie strictly inside (0, 1)")


def shrinkage_factors(tau2, sigma2, gamma2, lambda2, group_index) -> ShrinkageFactors:
    """κ = σ²/(σ² + τ²γ²λ²), computed on the log scale and kept inside (0, 1).

    Broadcasts over leading draw dimensions: tau2/sigma2 of shape (T,),
    gamma2 (T, G), lambda2 (T, p) give κ of shape (T, p).
    """
    tau2 = np.asarray(tau2, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    gamma2 = np.asarray(gamma2, dtype=float)
    lambda2 = np.asarray(lambda2, dtype=float)
    log_ratio = (
        np.log(tau2)[..., None]
        + np.log(gamma2)[..., group_index]
        + np.log(lambda2)
        - np.log(sigma2)[..., None]
    )
    kappa = special.expit(-log_ratio)
    kappa = np.clip(kappa, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return ShrinkageFactors(kappa)


def sample_prior_scales(rng: np.random.Generator, group_sizes, hyper: Hyperparameters, size: int):
    """Draw (γ², λ²) replicates from the GIGG prior.

    Returns gamma2 of shape (size, G) and lambda2 of shape (size, p).
    """
    sizes = np.asarray(group_sizes, dtype=int)
    index = np.repeat(np.arange(sizes.size), sizes)
    gamma2 = basic_sample(rng, "gamma", hyper.a, 1.0, size=(size, sizes.size))
    lambda2 = basic_sample(rng, "inverse_gamma", hyper.b[index], 1.0, size=(size, index.size))
    return np.asarray(gamma2), np.asarray(lambda2)


# ---------------------------------------------------------------------------
# Marginal prior and tails
# ---------------------------------------------------------------------------

def _check_positive(**kwargs) -> None:
    for name, value in kwargs.items():
        if not np.isfinite(value) or value <= 0:
            raise ParameterDomainError(f"{name} must be positive and finite, got {value}")


def marginal_prior_pdf(beta: float, tau2: float, a: float, b: float) -> float:
    """π(β | τ², a, b) = ∫ N(β; 0, u) τ⁻² β′(u/τ²; a, b) du.

    The integral is taken over t = log u on MIXTURE_LOG_RANGE, where both
    the pole of the mixing density at 0 and its polynomial tail are tame.
    """
    _check_positive(tau2=tau2, a=a, b=b)
    beta = float(beta)
    if beta == 0.0 and a <= 0.5:
        return float("inf")
    log_tau2 = np.log(tau2)
    beta2 = beta * beta

    def integrand(t):
        log_normal = -0.5 * (np.log(2.0 * np.pi) + t) - 0.5 * beta2 * np.exp(-t)
        return np.exp(log_normal + beta_prime_logpdf(np.exp(t - log_tau2), a, b) - log_tau2 + t)

    lo, hi = MIXTURE_LOG_RANGE
    candidates = {log_tau2} | ({float(np.log(beta2))} if beta2 > 0 else set())
    points = sorted(x for x in candidates if lo < x < hi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr = integrate.quad(
            integrand, lo, hi, points=points or None,
            epsabs=0.0, epsrel=MIXTURE_RTOL / 10.0, limit=500,
        )
    if not np.isfinite(value) or value <= 0 or abserr > MIXTURE_RTOL * value:
        raise NumericError(
            f"marginal prior quadrature did not converge at beta={beta}",
            achieved=abserr / value if value > 0 else abserr,
        )
    return float(value)


def tail_rate(beta: float, tau2: float, a: float, b: float) -> float:
    """Polynomial tail r(β) with π(β)/r(β) → 1 as |β| → ∞; tail index -(1 + 2b)."""
    _check_positive(tau2=tau2, a=a, b=b)
    if beta == 0:
        raise ParameterDomainError("tail_rate has a pole at beta = 0")
    ab = abs(float(beta))
    z = ab * ab / tau2
    log_rate = (
        b * np.log(2.0 * tau2)
        + special.gammaln(b + 0.5)
        - 0.5 * np.log(np.pi)
        - special.betaln(a, b)
        - (1.0 + 2.0 * b) * np.log(ab)
        + a * (np.log(z) - np.log1p(z))
    )
    return float(np.exp(log_rate))


# ---------------------------------------------------------------------------
# Shrinkage-factor prior and normal-means posterior
# ---------------------------------------------------------------------------

def shrinkage_prior_logpdf(kappa_g, tau2: float, sigma2: float, a: float, b: float) -> float:
    """Log joint prior density of the shrinkage factors of one group."""
    _check_positive(tau2=tau2, sigma2=sigma2, a=a, b=b)
    kappa = np.atleast_1d(np.asarray(kappa_g, dtype=float))
    if np.any(kappa <= 0) or np.any(kappa >= 1):
        raise ParameterDomainError("shrinkage factors must lie strictly inside (0, 1)")
    pg = kappa.size
    ratio = tau2 / sigma2
    odds = kappa / (1.0 - kappa)
    return float(
        special.gammaln(a + pg * b) - special.gammaln(a) - pg * special.gammaln(b)
        + pg * b * np.log(ratio)
        - (a + pg * b) * np.log1p(ratio * odds.sum())
        + np.sum((b - 1.0) * np.log(kappa) - (b + 1.0) * np.log1p(-kappa))
    )


def _posterior_log_kernel(t, y2, tau2, sigma2, a, b):
    """Posterior kernel of κ_g | y_g in log-odds coordinates t = logit(κ).

    Includes the Jacobian κ(1 - κ), so it integrates over t ∈ R^{p_g}.
    """
    t = np.asarray(t, dtype=float)
    pg = t.shape[-1]
    log_kappa = -np.logaddexp(0.0, -t)
    log_one_minus = -np.logaddexp(0.0, t)
    stacked = np.concatenate(
        [np.zeros(t.shape[:-1] + (1,)), np.log(tau2 / sigma2) + t], axis=-1,
    )
    coupling = -(a + pg * b) * special.logsumexp(stacked, axis=-1)
    local = np.sum(
        (b + 0.5) * log_kappa - b * log_one_minus - y2 * np.exp(log_kappa) / (2.0 * sigma2),
        axis=-1,
    )
    return coupling + local


def _kernel_shift(y2, tau2, sigma2, a, b) -> float:
    """Approximate maximum of the log kernel, to keep integrands near O(1)."""
    pg = y2.size
    axis = np.linspace(-40.0, 40.0, 81 if pg == 1 else (41 if pg == 2 else 21))
    grid = np.stack(np.meshgrid(*([axis] * pg), indexing="ij"), axis=-1).reshape(-1, pg)
    return float(np.max(_posterior_log_kernel(grid, y2, tau2, sigma2, a, b)))


def _expit(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _scalar_log_kernel(t, y2, log_ratio, sigma2, a, b) -> float:
    """_posterior_log_kernel for one point, in plain floats for the quadrature loops."""
    pg = len(t)
    terms = [0.0] + [log_ratio + tj for tj in t]
    top = max(terms)
    coupling = -(a + pg * b) * (top + math.log(sum(math.exp(x - top) for x in terms)))
    local = 0.0
    for tj, y2j in zip(t, y2):
        # log κ and log(1 - κ) without overflow for large |t|
        if tj >= 0.0:
            log_kappa = -math.log1p(math.exp(-tj))
            log_one_minus = -tj + log_kappa
        else:
            log_one_minus = -math.log1p(math.exp(tj))
            log_kappa = tj + log_one_minus
        local += (b + 0.5) * log_kappa - b * log_one_minus - y2j * math.exp(log_kappa) / (2.0 * sigma2)
    return coupling + local


def _kernel_quadrature(y2, tau2, sigma2, a, b, weight, ranges) -> tuple[float, float]:
    """∫ weight(t) exp(log_kernel(t) - shift) dt over the given ranges."""
    shift = _kernel_shift(y2, tau2, sigma2, a, b)
    log_ratio = math.log(tau2 / sigma2)
    y2_list = [float(v) for v in y2]

    def integrand(*t):
        return weight(t) * math.exp(_scalar_log_kernel(t, y2_list, log_ratio, sigma2, a, b) - shift)

    opts = {"epsabs": 0.0, "epsrel": 1e-8 if len(ranges) == 1 else 1e-6, "limit": 200}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if len(ranges) == 1:
            value, err = integrate.quad(integrand, *ranges[0], **opts)
        else:
            value, err = integrate.nquad(integrand, ranges, opts=[opts] * len(ranges))
    return value, err


class PosteriorEstimate(NamedTuple):
    value: float
    std_error: float
    method: str


def _check_normal_means_args(y_g, tau2, sigma2, a, b, j):
    _check_positive(tau2=tau2, sigma2=sigma2, a=a, b=b)
    y = np.atleast_1d(np.asarray(y_g, dtype=float))
    if y.size < 1:
        raise ParameterDomainError("y_g must contain at least one component")
    if not 0 <= j < y.size:
        raise ParameterDomainError(f"component index {j} out of range for p_g={y.size}")
    return y


def _use_quadrature(method: str, pg: int) -> bool:
    if method not in POSTERIOR_METHODS:
        raise ParameterDomainError(f"method must be one of {POSTERIOR_METHODS}, got {method!r}")
    if method == "quadrature" and pg > QUADRATURE_MAX_DIM:
        raise ParameterDomainError(f"quadrature handles groups of at most {QUADRATURE_MAX_DIM}, got {pg}")
    return method == "quadrature" or (method == "auto" and pg <= QUADRATURE_MAX_DIM)


def _importance_sample(y, tau2, sigma2, a, b, j, statistic, rng, target_se, max_draws) -> PosteriorEstimate:
    """Self-normalized importance sampling with Beta(b+1/2, 1/2) proposals on κ."""
    if rng is None:
        raise ParameterDomainError("importance sampling needs a random generator")
    pg = y.size
    c = a + pg * b
    ratio = tau2 / sigma2
    y2 = y * y
    sum_w = sum_wh = sum_w2h2 = sum_w2h = sum_w2 = 0.0
    log_shift = None
    drawn = 0
    est = se = np.nan
    while drawn < max_draws:
        kappa = rng.beta(b + 0.5, 0.5, size=(IS_BATCH, pg))
        kappa = np.clip(kappa, KAPPA_CLAMP, 1.0 - KAPPA_CLAMP)
        log_w = (
            -c * np.log1p(ratio * np.sum(kappa / (1.0 - kappa), axis=1))
            + np.sum(-(b + 0.5) * np.log1p(-kappa) - y2 * kappa / (2.0 * sigma2), axis=1)
        )
        if log_shift is None:
            log_shift = float(np.max(log_w))
        w = np.exp(log_w - log_shift)
        h = statistic(kappa[:, j])
        sum_w += w.sum()
        sum_wh += np.sum(w * h)
        sum_w2 += np.sum(w * w)
        sum_w2h += np.sum(w * w * h)
        sum_w2h2 += np.sum(w * w * h * h)
        drawn += IS_BATCH
        est = sum_wh / sum_w
        # delta-method variance of the ratio estimator
        var = (sum_w2h2 - 2.0 * est * sum_w2h + est * est * sum_w2) / (sum_w * sum_w)
        se = float(np.sqrt(max(var, 0.0)))
        if se < target_se:
            log.debug("importance sampling converged: %d draws, se=%.3g", drawn, se)
            return PosteriorEstimate(float(est), se, "importance")
    raise NumericError(
        f"importance sampling standard error {se:.3g} above target {target_se} after {drawn} draws",
        achieved=se,
    )


def normal_means_posterior_estimate(
    y_g, tau2: float, sigma2: float, a: float, b: float, j: int,
    rng: np.random.Generator | None = None,
    target_se: float = DEFAULT_IS_TARGET_SE,
    max_draws: int = DEFAULT_IS_MAX_DRAWS,
    method: str = "auto",
) -> PosteriorEstimate:
    """E[β_gj | y_g] = (1 - E[κ_gj | y_g]) y_gj with its numerical error.

    With method="auto", quadrature in log-odds coordinates for p_g <= 3 and
    importance sampling beyond; the importance-sampling standard error is
    on the posterior mean scale.
    """
    y = _check_normal_means_args(y_g, tau2, sigma2, a, b, j)
    quadrature = _use_quadrature(method, y.size)
    if y[j] == 0.0:
        return PosteriorEstimate(0.0, 0.0, "exact")

    if quadrature:
        y2 = y * y
        ranges = [(-np.inf, np.inf)] * y.size
        norm, err_norm = _kernel_quadrature(y2, tau2, sigma2, a, b, lambda t: 1.0, ranges)
        num, err_num = _kernel_quadrature(
            y2, tau2, sigma2, a, b, lambda t: _expit(-t[j]), ranges,
        )
        if not (np.isfinite(norm) and norm > 0):
            raise NumericError("posterior normalizing integral is not positive", achieved=norm)
        shrink = num / norm
        rel_err = err_num / max(num, 1e-300) + err_norm / norm
        return PosteriorEstimate(float(shrink * y[j]), float(abs(shrink * y[j]) * rel_err), "quadrature")

    est = _importance_sample(
        y, tau2, sigma2, a, b, j, lambda k: 1.0 - k, rng,
        target_se / max(abs(y[j]), 1e-300), max_draws,
    )
    return PosteriorEstimate(est.value * y[j], est.std_error * abs(y[j]), est.method)


def normal_means_posterior_mean(
    y_g, tau2: float, sigma2: float, a: float, b: float, j: int,
    rng: np.random.Generator | None = None,
    target_se: float = DEFAULT_IS_TARGET_SE,
    max_draws: int = DEFAULT_IS_MAX_DRAWS,
    method: str = "auto",
) -> float:
    """Posterior mean of β_gj in the normal-means model (X = I, τ², σ² known)."""
    est = normal_means_posterior_estimate(y_g, tau2, sigma2, a, b, j, rng, target_se, max_draws, method)
    if est.method == "importance":
        log.info("posterior mean of component %d: %.6g (importance se %.2g)", j, est.value, est.std_error)
    return est.value


def shrinkage_posterior_probability(
    y_g, tau2: float, sigma2: float, a: float, b: float, j: int, threshold: float,
    upper: bool = False,
    rng: np.random.Generator | None = None,
    target_se: float = DEFAULT_IS_TARGET_SE,
    max_draws: int = DEFAULT_IS_MAX_DRAWS,
    method: str = "auto",
) -> float:
    """π(κ_gj < threshold | y_g) in the normal-means model, or π(κ_gj >= threshold | y_g) if upper.

    method picks the integrator as in `normal_means_posterior_estimate`.
    """
    y = _check_normal_means_args(y_g, tau2, sigma2, a, b, j)
    if not 0.0 < threshold < 1.0:
        raise ParameterDomainError(f"threshold must lie in (0, 1), got {threshold}")

    if _use_quadrature(method, y.size):
        y2 = y * y
        cut = float(special.logit(threshold))
        full = [(-np.inf, np.inf)] * y.size
        lower = list(full)
        lower[j] = (-np.inf, cut)
        norm, _ = _kernel_quadrature(y2, tau2, sigma2, a, b, lambda t: 1.0, full)
        below, _ = _kernel_quadrature(y2, tau2, sigma2, a, b, lambda t: 1.0, lower)
        if not (np.isfinite(norm) and norm > 0):
            raise NumericError("posterior normalizing integral is not positive", achieved=norm)
        prob = min(max(below / norm, 0.0), 1.0)
    else:
        prob = _importance_sample(
            y, tau2, sigma2, a, b, j, lambda k: (k < threshold).astype(float), rng,
            target_se, max_draws,
        ).value
    return 1.0 - prob if upper else prob
